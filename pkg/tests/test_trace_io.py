import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hapticsim.scenario import load_packaged, run
from hapticsim.scenario.metrics import Outcome, RunMetrics
from hapticsim.trace_io import CHANNELS, SCHEMA_VERSION, Table, Trace, TraceError, read_trace, write_trace


def empty_trace(metrics=None):
    return Trace(
        {"scenario": "empty", "config_digest": "0" * 64},
        Table(("tick", "time", "cube.z"), "iff"),
        Table(("tick", "body_a"), "is"),
        Table(("tick", "kind"), "is"),
        Table(("sample", "time", "index.force"), "iff"),
        metrics,
    )


@pytest.fixture(scope="module")
def short_run():
    cfg = load_packaged("glass_cube_grasp").with_overrides(timeout=0.6)
    return run(cfg)


def test_empty_run_writes_header_only_files(tmp_path):
    trace = empty_trace()
    write_trace(trace, tmp_path)
    for c in CHANNELS:
        lines = (tmp_path / f"{c}.csv").read_text().splitlines()
        assert lines == [",".join(trace.table(c).columns)]
    header = json.loads((tmp_path / "header.json").read_text())
    assert header["schema_version"] == SCHEMA_VERSION
    assert read_trace(tmp_path) == trace


def test_run_round_trips_value_for_value(short_run, tmp_path):
    write_trace(short_run.trace, tmp_path)
    again = read_trace(tmp_path)
    assert again == short_run.trace
    assert again.metrics == short_run.metrics
    for c in CHANNELS:
        assert len(again.table(c)) == len(short_run.trace.table(c))


def test_identical_runs_give_identical_bytes(short_run, tmp_path):
    cfg = load_packaged("glass_cube_grasp").with_overrides(timeout=0.6)
    write_trace(short_run.trace, tmp_path / "a")
    write_trace(run(cfg).trace, tmp_path / "b")
    for name in ["header.json", "metrics.csv", *(f"{c}.csv" for c in CHANNELS)]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_newer_major_version_rejected(tmp_path):
    write_trace(empty_trace(), tmp_path)
    header = json.loads((tmp_path / "header.json").read_text())
    header["schema_version"] = "2.0"
    (tmp_path / "header.json").write_text(json.dumps(header))
    with pytest.raises(TraceError, match="2.0 is newer"):
        read_trace(tmp_path)


def test_older_minor_version_is_read(tmp_path):
    write_trace(empty_trace(), tmp_path)
    header = json.loads((tmp_path / "header.json").read_text())
    header["schema_version"] = "1.7"
    (tmp_path / "header.json").write_text(json.dumps(header))
    read_trace(tmp_path)


def test_write_failure_names_the_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(TraceError, match=str(blocker)):
        write_trace(empty_trace(), blocker / "trace")


def test_missing_trace_names_the_path(tmp_path):
    with pytest.raises(TraceError, match="nowhere"):
        read_trace(tmp_path / "nowhere")


def test_corrupt_row_names_file_and_line(tmp_path):
    write_trace(empty_trace(), tmp_path)
    with (tmp_path / "physics.csv").open("a") as fh:
        fh.write("1,0.01,abc\n")
    with pytest.raises(TraceError, match=r"physics\.csv:2"):
        read_trace(tmp_path)


def test_column_mismatch_detected(tmp_path):
    write_trace(empty_trace(), tmp_path)
    (tmp_path / "haptics.csv").write_text("sample,time\n")
    with pytest.raises(TraceError, match="columns"):
        read_trace(tmp_path)


def test_metrics_with_missing_times_round_trip(tmp_path):
    m = RunMetrics(Outcome.DROP_FAILURE, slip_onset=0.54, end_time=0.8, diagnostics=("note, with comma",))
    write_trace(empty_trace(m), tmp_path)
    back = read_trace(tmp_path).metrics
    assert back.outcome is Outcome.DROP_FAILURE
    assert back.slip_onset == 0.54 and back.response is None and back.latency is None
    assert back.diagnostics == ("note, with comma",)


def test_nul_in_string_rejected(tmp_path):
    trace = empty_trace()
    trace.events.append((1, "a\x00b"))
    with pytest.raises(TraceError, match="NUL"):
        write_trace(trace, tmp_path)


def test_unencodable_string_rejected(tmp_path):
    trace = empty_trace()
    trace.events.append((1, "\ud800"))
    with pytest.raises(TraceError, match="surrogates"):
        write_trace(trace, tmp_path)


def test_table_rejects_ragged_rows():
    t = Table(("a", "b"), "ff")
    with pytest.raises(TraceError):
        t.append((1.0,))


@settings(max_examples=60, deadline=None)
@given(
    values=st.lists(
        st.tuples(
            st.integers(-(2**53), 2**53),
            st.floats(allow_infinity=True, allow_nan=True),
            st.text(st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"), max_size=8),
        ),
        max_size=20,
    )
)
def test_values_reload_bit_for_bit(tmp_path_factory, values):
    trace = empty_trace()
    trace.physics = Table(("tick", "x", "label"), "ifs", [tuple(v) for v in values])
    path = tmp_path_factory.mktemp("t")
    write_trace(trace, path)
    back = read_trace(path).physics
    for (i, x, s), (bi, bx, bs) in zip(values, back.rows):
        assert bi == i
        if math.isnan(x):
            assert math.isnan(bx)
        else:
            assert np.float64(bx).tobytes() == np.float64(x).tobytes()
        assert bs == s
    assert len(back) == len(values)
