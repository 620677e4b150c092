"""Command line: ``hapticsim run|batch|verify|list``.

Exit codes: 0 success or clean completion, 1 task failure (or failed
verification), 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import glob
import math
import sys
from pathlib import Path

import numpy as np

from .scenario.config import (
    ConfigError,
    ScenarioConfig,
    config_digest,
    config_from_dict,
    load_packaged,
    packaged_names,
    read_config,
)
from .scenario.metrics import Outcome, detect_grasp_response
from .scenario.runner import RunAborted, run
from .synth import MAX_RATE, MIN_RATE, HapticMode
from .trace_io import Trace, TraceError, read_trace, write_trace

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2

REPORT_FIELDS = ("scenario", "seed", "haptics", "outcome", "slip_onset", "response", "latency", "completion_time", "end_time")


def resolve_config(ref: str) -> ScenarioConfig:
    """A config path, or the stem of a packaged scenario."""
    path = Path(ref)
    if path.exists():
        return read_config(path)
    if ref in packaged_names():
        return load_packaged(ref)
    raise ConfigError([f"{ref}: no such config file or packaged scenario"])


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "haptics", None) is not None:
        out["haptics__mode"] = args.haptics
    if getattr(args, "rate", None) is not None:
        out["haptics__rate"] = args.rate
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".6g")
    if isinstance(value, Outcome):
        return value.value
    return str(getattr(value, "value", value))


def _report_row(cfg: ScenarioConfig, metrics) -> dict:
    return {
        "scenario": cfg.name,
        "seed": cfg.seed,
        "haptics": cfg.haptics.mode,
        "outcome": metrics.outcome,
        "slip_onset": metrics.slip_onset,
        "response": metrics.response,
        "latency": metrics.latency,
        "completion_time": metrics.completion_time,
        "end_time": metrics.end_time,
    }


def _emit(rows, out=None) -> None:
    writer = csv.writer(out or sys.stdout, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    for r in rows:
        writer.writerow([_fmt(r[k]) for k in REPORT_FIELDS])


def _execute(cfg: ScenarioConfig, out_dir: Path | None, plots: bool):
    """Run one config, writing the trace (also for aborted runs); returns (metrics, aborted)."""
    try:
        result = run(cfg)
        trace, aborted = result.trace, None
    except RunAborted as exc:
        trace, aborted = exc.trace, str(exc)
    if out_dir is not None:
        write_trace(trace, out_dir)
        if plots:
            from .plots import render_figures

            for p in render_figures(trace, out_dir / "figures"):
                print(f"# figure {p}", file=sys.stderr)
    return trace.metrics, aborted


def cmd_run(args) -> int:
    try:
        cfg = resolve_config(args.config).with_overrides(**_overrides(args))
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else None
    if args.plots and out is None:
        out = Path(f"{cfg.name}_trace")
    try:
        metrics, aborted = _execute(cfg, out, args.plots)
    except TraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if aborted:
        print(f"run aborted: {aborted}", file=sys.stderr)
    _emit([_report_row(cfg, metrics)])
    if out is not None:
        print(f"# trace written to {out}", file=sys.stderr)
    return EXIT_FAILURE if aborted or metrics.outcome.is_failure else EXIT_OK


def cmd_batch(args) -> int:
    paths = sorted(glob.glob(args.pattern))
    if not paths:
        print(f"{args.pattern}: no config files match", file=sys.stderr)
        return EXIT_CONFIG
    configs = []
    for p in paths:
        try:
            configs.append(read_config(p).with_overrides(**_overrides(args)))
        except ConfigError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_CONFIG
    rows, failures = [], 0
    for p, cfg in zip(paths, configs):
        out = Path(args.out) / Path(p).stem if args.out else None
        metrics, aborted = _execute(cfg, out, args.plots)
        failures += int(bool(aborted) or metrics.outcome.is_failure)
        rows.append(_report_row(cfg, metrics))
    _emit(rows)
    print(f"# runs={len(rows)} failure_count={failures}", file=sys.stderr)
    return EXIT_FAILURE if failures else EXIT_OK


# ---------------------------------------------------------------- verify


def _check(results: list, name: str, ok: bool, detail: str = "") -> None:
    results.append((name, bool(ok), detail))


def verify_trace(trace: Trace, tol: float = 1e-6) -> list[tuple[str, bool, str]]:
    """Re-check the stored trace against the invariants every run must satisfy."""
    res: list[tuple[str, bool, str]] = []
    header = trace.header
    try:
        cfg = config_from_dict(header["config"])
        _check(res, "config digest", config_digest(cfg) == header.get("config_digest"))
    except (KeyError, ConfigError) as exc:
        _check(res, "config digest", False, f"embedded config unreadable: {exc}")
        return res

    ph = trace.physics
    dt = cfg.dt
    if len(ph):
        ticks = ph.column("tick")
        times = ph.column("time")
        _check(res, "physics timestamps", np.array_equal(times, ticks * dt) and np.all(np.diff(ticks) == 1))
        quat_cols = [c for c in ph.columns if c.endswith(".qw")]
        worst = 0.0
        for c in quat_cols:
            stem = c[: -len("qw")]
            q = np.stack([ph.column(stem + k) for k in ("qw", "qx", "qy", "qz")], axis=1)
            worst = max(worst, float(np.max(np.abs(np.linalg.norm(q, axis=1) - 1.0))))
        _check(res, "unit quaternions", worst <= 1e-9, f"max |q|-1 = {worst:.3g}")
        finite = all(np.all(np.isfinite(ph.column(c))) for c, k in zip(ph.columns, ph.kinds) if k == "f")
        _check(res, "finite state", finite)
        jerr = float(np.max(ph.column("joint_error_max")))
        _check(res, "joint error <= 1 mm", jerr <= 1e-3, f"max {jerr:.3g} m")
        k_c = cfg.hand.coupling_k
        fingers = [c[: -len(".F")] for c in ph.columns if c.endswith(".F")]
        gap = 0.0
        grip = np.zeros(len(ph))
        for f in fingers:
            n, force = ph.column(f"{f}.n"), ph.column(f"{f}.F")
            gap = max(gap, float(np.max(np.abs(force - k_c * n))))
            grip += force
            _check(res, f"{f} penetration >= 0", np.all(n >= 0))
        _check(res, "pressure force = k*n", gap <= 1e-12, f"max gap {gap:.3g} N")
        _check(res, "grip total", np.allclose(grip, ph.column("grip_force_total"), rtol=0, atol=1e-12))
        residual = float(np.max(ph.column("solver_residual")))
        _check(res, "solver residual", residual <= 1e-8, f"max {residual:.3g}")
    else:
        _check(res, "physics timestamps", True, "empty")

    ct = trace.contacts
    if len(ct):
        ln = ct.column("normal_impulse")
        t1, t2, mu = ct.column("t1_impulse"), ct.column("t2_impulse"), ct.column("mu")
        _check(res, "contact penetration >= 0", np.all(ct.column("penetration") >= 0) and np.all(ct.column("gap") >= 0))
        _check(res, "normal impulse >= 0", np.all(ln >= -1e-12))
        bound = mu * np.maximum(ln, 0.0) + tol * np.maximum(1.0, ln)
        _check(res, "friction bounds", np.all(np.abs(t1) <= bound) and np.all(np.abs(t2) <= bound))
        normals = np.stack([ct.column(c) for c in ("nx", "ny", "nz")], axis=1)
        _check(res, "unit normals", np.all(np.abs(np.linalg.norm(normals, axis=1) - 1.0) <= 1e-9))
        _check(res, "contact timestamps", np.array_equal(ct.column("time"), ct.column("tick") * dt))

    hp = trace.haptics
    if len(hp):
        rate = float(header.get("haptics_rate_hz", cfg.haptics.rate))
        idx = hp.column("sample")
        _check(res, "haptic timestamps", np.allclose(hp.column("time"), idx / rate, rtol=1e-12, atol=1e-12))
        i_max = cfg.actuator.current_at_max
        forces = [hp.column(c) for c in hp.columns if c.endswith(".force")]
        currents = [hp.column(c) for c in hp.columns if c.endswith(".current")]
        _check(res, "haptic commands >= 0", all(np.all(f >= 0) for f in forces))
        _check(res, "currents within range", all(np.all((c >= 0) & (c <= i_max + 1e-12)) for c in currents))

    m = trace.metrics
    if m is not None:
        _check(res, "exactly one outcome", isinstance(m.outcome, Outcome))
        ok = m.slip_onset is None or m.response is None or m.response >= m.slip_onset
        _check(res, "T2 >= T1", ok)
        _check(res, "latency present with T1 and T2", (m.latency is not None) == (m.slip_onset is not None and m.response is not None))
        if len(ph):
            t2 = detect_grasp_response(ph.column("time"), ph.column("pinch_tracked"), m.slip_onset, cfg.task.closure_speed)
            _check(res, "T2 recomputed", t2 == m.response, f"{t2} vs {m.response}")
            if cfg.task.break_force_total > 0:
                grip = ph.column("grip_force_total")
                over = np.flatnonzero(grip > cfg.task.break_force_total)
                if m.outcome is Outcome.BREAK_FAILURE:
                    _check(res, "break at first over-force tick", len(over) and over[0] == len(grip) - 1)
                elif len(over) and m.outcome is not Outcome.TIMEOUT:
                    _check(res, "no unreported over-force", False, f"tick {int(ph.column('tick')[over[0]])}")
    return res


def cmd_verify(args) -> int:
    try:
        trace = read_trace(args.trace)
    except TraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    results = verify_trace(trace)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(("check", "status", "detail"))
    for name, ok, detail in results:
        writer.writerow((name, "PASS" if ok else "FAIL", detail))
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAILURE


def cmd_list(args) -> int:
    for name in packaged_names():
        print(name)
    return EXIT_OK


def _rate(text: str) -> float:
    value = float(text)
    if not (MIN_RATE <= value <= MAX_RATE) or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"rate must lie in [{MIN_RATE}, {MAX_RATE}] Hz")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hapticsim", description="Haptic manipulation scenario simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="directory for trace files")
        p.add_argument("--seed", type=int, help="seed for the scenario's random draws")
        p.add_argument("--haptics", choices=[m.value for m in HapticMode])
        p.add_argument("--rate", type=_rate, help="haptic output rate in Hz")
        p.add_argument("--plots", action="store_true", help="render PNG figures next to the trace")

    p = sub.add_parser("run", help="run one scenario config (path or packaged name)")
    p.add_argument("config", help="TOML config path or packaged scenario name")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run every config matching a glob")
    p.add_argument("pattern")
    common(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("verify", help="re-check invariants on a stored trace")
    p.add_argument("trace")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("list", help="list packaged scenarios")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
