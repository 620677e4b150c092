"""Figures of a run, written as PNG files next to the trace."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .trace_io import Trace


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _fingers(trace: Trace) -> list[str]:
    return [c[: -len(".force")] for c in trace.haptics.columns if c.endswith(".force")]


def render_figures(trace: Trace, out_dir) -> list[Path]:
    """Pinch distance, grip force, object height and haptic commands; returns the files written."""
    plt = _pyplot()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ph = trace.physics
    written = []
    if len(ph) == 0:
        return written
    t = ph.column("time")
    obj = trace.header.get("config", {}).get("task", {}).get("object", "")

    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(t, 100 * ph.column("pinch_tracked"), label="tracked")
    ax.plot(t, 100 * ph.column("pinch_sim"), label="simulated", linestyle="--")
    m = trace.metrics
    if m is not None and m.slip_onset is not None:
        ax.axvline(m.slip_onset, color="tab:red", linewidth=0.8, label="T1")
    if m is not None and m.response is not None:
        ax.axvline(m.response, color="tab:green", linewidth=0.8, label="T2")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("pinch distance (cm)")
    ax.legend(loc="best")
    written.append(_save(fig, out / "pinch_distance.png", plt))

    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(t, ph.column("grip_force_total"), label="total")
    for name in _fingers(trace):
        if f"{name}.F" in ph.columns:
            ax.plot(t, ph.column(f"{name}.F"), linewidth=0.8, label=name)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("pressure force (N)")
    ax.legend(loc="best")
    written.append(_save(fig, out / "grip_force.png", plt))

    if f"{obj}.z" in ph.columns:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        ax.plot(t, 100 * ph.column(f"{obj}.z"))
        ax.set_xlabel("time (s)")
        ax.set_ylabel(f"{obj} height (cm)")
        written.append(_save(fig, out / "object_height.png", plt))

    hp = trace.haptics
    if len(hp):
        fig, ax = plt.subplots(figsize=(7, 3.2))
        th = hp.column("time")
        for name in _fingers(trace):
            ax.plot(th, hp.column(f"{name}.force"), linewidth=0.7, label=name)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("force command (N)")
        ax.legend(loc="best")
        written.append(_save(fig, out / "haptic_commands.png", plt))
    return written


def _save(fig, path: Path, plt) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def spectrum_figure(x, sample_rate: float, path) -> Path:
    plt = _pyplot()
    x = np.asarray(x, dtype=float)
    spec = np.abs(np.fft.rfft(x - x.mean()))
    freqs = np.fft.rfftfreq(len(x), 1.0 / sample_rate)
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(freqs, spec)
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("|X(f)|")
    return _save(fig, Path(path), plt)
