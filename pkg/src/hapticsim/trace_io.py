"""Trace files: a JSON header plus one CSV per channel.

Floats are printed with 17 significant digits, so a reload reproduces every
double bit for bit, and a run's files are byte-identical on one platform.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scenario.metrics import Outcome, RunMetrics

SCHEMA_VERSION = "1.0"
CHANNELS = ("physics", "contacts", "events", "haptics")


class TraceError(ValueError):
    pass


@dataclass
class Table:
    """Column-typed rows; kinds are ``f`` (float), ``i`` (int) or ``s`` (str)."""

    columns: tuple[str, ...]
    kinds: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.kinds = tuple(self.kinds)
        if len(self.columns) != len(self.kinds):
            raise TraceError("columns and kinds differ in length")

    def append(self, row) -> None:
        if len(row) != len(self.columns):
            raise TraceError(f"row of {len(row)} values for {len(self.columns)} columns")
        self.rows.append(tuple(row))

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        values = [r[k] for r in self.rows]
        if self.kinds[k] == "s":
            return np.array(values, dtype=object)
        return np.array(values, dtype=float if self.kinds[k] == "f" else np.int64)

    def __len__(self) -> int:
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, Table):
            return NotImplemented
        return self.columns == other.columns and self.kinds == other.kinds and _rows_equal(self.rows, other.rows)

    def schema(self) -> list[dict]:
        return [{"name": c, "kind": k} for c, k in zip(self.columns, self.kinds)]


def _rows_equal(a, b) -> bool:
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        for x, y in zip(ra, rb):
            if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
                continue
            if x != y:
                return False
    return True


@dataclass
class Trace:
    header: dict
    physics: Table
    contacts: Table
    events: Table
    haptics: Table
    metrics: RunMetrics | None = None

    def table(self, name: str) -> Table:
        return getattr(self, name)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.header == other.header
            and all(self.table(c) == other.table(c) for c in CHANNELS)
            and self.metrics == other.metrics
        )


def fmt(value, kind: str) -> str:
    if kind == "f":
        return format(float(value), ".17g")
    if kind == "i":
        return str(int(value))
    return str(value)


def parse(text: str, kind: str):
    if kind == "f":
        return float(text)
    if kind == "i":
        return int(text)
    return text


def platform_tag() -> str:
    return f"{platform.system()}-{platform.machine()}-py{platform.python_version()}-numpy{np.__version__}"


def _cell(text: str, alone: bool) -> str:
    # csv.writer leaves a bare "\r" unquoted when the terminator is "\n", so quote by hand
    if "\x00" in text:
        raise TraceError(f"NUL character in trace value {text!r}")
    if any(ch in text for ch in ',"\r\n') or (alone and not text):
        return '"' + text.replace('"', '""') + '"'
    return text


def _write_table(table: Table, path: Path) -> None:
    buf = io.StringIO()
    alone = len(table.columns) == 1
    kinds = table.kinds
    for cells in [table.columns, *([fmt(v, k) for v, k in zip(row, kinds)] for row in table.rows)]:
        buf.write(",".join(_cell(c, alone) for c in cells) + "\n")
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def _read_table(path: Path, schema: list[dict]) -> Table:
    columns = tuple(c["name"] for c in schema)
    kinds = tuple(c["kind"] for c in schema)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration as exc:
            raise TraceError(f"{path}: empty file") from exc
        if tuple(head) != columns:
            raise TraceError(f"{path}: columns do not match the header schema")
        rows = []
        for line, rec in enumerate(reader, start=2):
            if len(rec) != len(columns):
                raise TraceError(f"{path}:{line}: expected {len(columns)} fields, got {len(rec)}")
            try:
                rows.append(tuple(parse(v, k) for v, k in zip(rec, kinds)))
            except ValueError as exc:
                raise TraceError(f"{path}:{line}: {exc}") from exc
    return Table(columns, kinds, rows)


_METRIC_FIELDS = ("outcome", "slip_onset", "response", "latency", "failure_count", "completion_time", "end_time")


def _metrics_table(m: RunMetrics) -> Table:
    table = Table(("name", "value"), ("s", "s"))
    for name in _METRIC_FIELDS:
        value = getattr(m, name)
        if isinstance(value, Outcome):
            text = value.value
        elif value is None:
            text = ""
        elif isinstance(value, int):
            text = str(value)
        else:
            text = fmt(value, "f")
        table.append((name, text))
    for note in m.diagnostics:
        table.append(("diagnostic", note))
    return table


def _metrics_from(table: Table, physics: Table) -> RunMetrics:
    values = {}
    notes = []
    for name, text in table.rows:
        if name == "diagnostic":
            notes.append(text)
        else:
            values[name] = text

    def opt(name):
        text = values.get(name, "")
        return None if text == "" else float(text)

    pinch = physics.column("pinch_tracked") if "pinch_tracked" in physics.columns else np.zeros(0)
    grip = physics.column("grip_force_total") if "grip_force_total" in physics.columns else np.zeros(0)
    return RunMetrics(
        outcome=Outcome(values["outcome"]),
        pinch_distance=pinch,
        total_grip_force=grip,
        slip_onset=opt("slip_onset"),
        response=opt("response"),
        failure_count=int(values.get("failure_count", "0")),
        completion_time=opt("completion_time"),
        end_time=float(values.get("end_time", "0")),
        diagnostics=tuple(notes),
    )


def write_trace(trace: Trace, path) -> None:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        header = dict(trace.header)
        header["schema_version"] = SCHEMA_VERSION
        header["channels"] = {c: trace.table(c).schema() for c in CHANNELS}
        (out / "header.json").write_text(json.dumps(header, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
        for c in CHANNELS:
            _write_table(trace.table(c), out / f"{c}.csv")
        if trace.metrics is not None:
            _write_table(_metrics_table(trace.metrics), out / "metrics.csv")
    except OSError as exc:
        raise TraceError(f"cannot write trace to {out}: {exc.strerror or exc}") from exc
    except UnicodeEncodeError as exc:
        raise TraceError(f"cannot write trace to {out}: {exc.reason} in {exc.object[exc.start:exc.end]!r}") from exc


def read_trace(path) -> Trace:
    src = Path(path)
    try:
        header = json.loads((src / "header.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise TraceError(f"cannot read trace header in {src}: {exc.strerror or exc}") from exc
    version = str(header.get("schema_version", ""))
    try:
        major = int(version.split(".")[0])
    except ValueError as exc:
        raise TraceError(f"{src}: malformed schema version {version!r}") from exc
    supported = int(SCHEMA_VERSION.split(".")[0])
    if major > supported:
        raise TraceError(f"{src}: schema version {version} is newer than supported {SCHEMA_VERSION}")
    schemas = header.get("channels", {})
    tables = {}
    for c in CHANNELS:
        if c not in schemas:
            raise TraceError(f"{src}: header lacks the {c} schema")
        tables[c] = _read_table(src / f"{c}.csv", schemas[c])
    metrics = None
    if (src / "metrics.csv").exists():
        mt = _read_table(src / "metrics.csv", [{"name": "name", "kind": "s"}, {"name": "value", "kind": "s"}])
        metrics = _metrics_from(mt, tables["physics"])
    body = {k: v for k, v in header.items() if k not in ("schema_version", "channels")}
    return Trace(header=body, metrics=metrics, **tables)
