import numpy as np
import pytest

from hapticsim.physics import SimulationError
from hapticsim.scenario import ConfigError, Outcome, RunAborted, build_scene, load_packaged, run
from hapticsim.scenario import runner as runner_mod
from hapticsim.scenario.config import config_digest

DT = 0.01


@pytest.fixture(scope="module")
def outcomes():
    return {name: run(load_packaged(name)) for name in ("glass_cube_grasp", "cube_squeeze", "slide_regrasp", "peg_in_hole")}


# ---------------------------------------------------------------- outcomes


def test_firm_grasp_and_hold_succeeds(outcomes):
    m = outcomes["glass_cube_grasp"].metrics
    assert m.outcome is Outcome.SUCCESS
    # lift ends at 2 s, then 3 s inside the 1.5 cm target ball
    assert 5.0 - 0.5 <= m.completion_time <= 5.0 + 0.5
    assert m.end_time == m.completion_time


def test_squeeze_breaks_at_first_over_force_tick(outcomes):
    r = outcomes["cube_squeeze"]
    assert r.metrics.outcome is Outcome.BREAK_FAILURE
    grip = r.trace.physics.column("grip_force_total")
    over = np.flatnonzero(grip > 8.0)
    assert over[0] == len(grip) - 1
    assert r.metrics.end_time == pytest.approx(r.trace.physics.column("time")[over[0]])


def test_release_without_regrasp_drops():
    r = run(load_packaged("slide_regrasp").with_overrides(task__response_delay=-1.0))
    assert r.metrics.outcome is Outcome.DROP_FAILURE
    assert r.metrics.slip_onset is not None
    assert r.metrics.response is None and r.metrics.latency is None


def test_wide_release_is_flagged_as_invalid_attempt(outcomes):
    assert outcomes["slide_regrasp"].metrics.diagnostics == ()
    cfg = load_packaged("slide_regrasp").with_overrides(task__response_delay=-1.0, task__release_width=0.06)
    m = run(cfg).metrics
    assert m.outcome is Outcome.DROP_FAILURE
    assert m.diagnostics == ("invalid attempt: no fingertip contact after slip onset",)


def test_slide_regrasp_recovers_the_injected_delay(outcomes):
    m = outcomes["slide_regrasp"].metrics
    assert m.latency == pytest.approx(0.25, abs=DT)
    assert m.response >= m.slip_onset


def test_peg_passes_through_the_hole(outcomes):
    r = outcomes["peg_in_hole"]
    assert r.metrics.outcome is Outcome.SUCCESS
    status = list(r.trace.physics.column("peg_status"))
    assert status[-1] == "Passed"
    assert "InHole" in status


def test_timeout_when_nothing_concludes():
    m = run(load_packaged("glass_cube_grasp").with_overrides(timeout=0.3)).metrics
    assert m.outcome is Outcome.TIMEOUT
    assert m.completion_time is None
    assert m.end_time == pytest.approx(0.3)


# ---------------------------------------------------------------- trace contents


def test_every_tick_logged_on_the_physics_clock(outcomes):
    ph = outcomes["glass_cube_grasp"].trace.physics
    ticks = ph.column("tick")
    assert np.array_equal(ticks, np.arange(1, len(ph) + 1))
    assert np.array_equal(ph.column("time"), ticks * DT)


def test_haptic_samples_on_their_own_clock(outcomes):
    hp = outcomes["glass_cube_grasp"].trace.haptics
    idx = hp.column("sample")
    assert np.all(np.diff(idx) == 1)
    assert np.allclose(hp.column("time"), idx / 500.0, rtol=0, atol=1e-12)
    assert len(hp) == pytest.approx(5 * len(outcomes["glass_cube_grasp"].trace.physics), abs=5)


def test_tracked_pinch_is_the_pad_gap(outcomes):
    ph = outcomes["glass_cube_grasp"].trace.physics
    thumb = np.stack([ph.column(f"thumb.target_{a}") for a in "xyz"], axis=1)
    index = np.stack([ph.column(f"index.target_{a}") for a in "xyz"], axis=1)
    # pads face each other along x, one 8 mm tip radius in from each centre
    gap = np.linalg.norm(thumb - index, axis=1) - 2 * 0.008
    assert ph.column("pinch_tracked") == pytest.approx(gap, abs=1e-12)
    # closed on the 5 cm cube with each tracked pad 5 mm inside its face
    assert ph.column("pinch_tracked")[-1] == pytest.approx(0.04, abs=1e-12)


def test_pressure_is_k_times_penetration_in_trace(outcomes):
    ph = outcomes["glass_cube_grasp"].trace.physics
    for f in ("thumb", "index"):
        assert np.array_equal(ph.column(f"{f}.F"), 100.0 * ph.column(f"{f}.n"))


def test_joint_error_stays_under_a_millimetre(outcomes):
    for r in outcomes.values():
        assert np.max(r.trace.physics.column("joint_error_max")) <= 1e-3


def test_header_digest_matches_config():
    cfg = load_packaged("glass_cube_grasp").with_overrides(timeout=0.1)
    header = run(cfg).trace.header
    assert header["config_digest"] == config_digest(cfg)
    assumed = header["assumed_hand_parameters"]
    assert assumed["thumb"] == {"tip_radius": 0.008, "proximal_radius": 0.007, "phalange_mass": 0.01}


def test_build_scene_names_bodies():
    scene = build_scene(load_packaged("glass_cube_grasp"))
    assert scene.names[scene.object_id] == "cube"
    assert {f.name for f in scene.hand.fingers} == {"thumb", "index"}
    scene.hand.validate(scene.world)


# ---------------------------------------------------------------- determinism and haptic conditions


def test_replay_is_identical():
    cfg = load_packaged("slide_regrasp").with_overrides(seed=7)
    a, b = run(cfg), run(cfg)
    assert a.trace == b.trace
    assert a.metrics == b.metrics


def test_seed_moves_the_release():
    base = load_packaged("slide_regrasp")
    t1 = {run(base.with_overrides(seed=s)).metrics.slip_onset for s in range(4)}
    assert len(t1) > 1


@pytest.mark.parametrize("mode", ["off", "pressure", "vibration"])
def test_haptic_condition_changes_only_the_haptic_channel(mode):
    base = load_packaged("slide_regrasp")
    on = run(base).trace
    other = run(base.with_overrides(haptics__mode=mode)).trace
    assert other.physics == on.physics
    assert other.contacts == on.contacts
    assert other.haptics.columns == on.haptics.columns
    assert other.haptics != on.haptics


def test_no_haptics_mode_sends_zero_current():
    hp = run(load_packaged("slide_regrasp").with_overrides(haptics__mode="off")).trace.haptics
    for c in hp.columns:
        if c.endswith(".current"):
            assert np.all(hp.column(c) == 0.0)


# ---------------------------------------------------------------- failures


def test_invalid_override_is_a_config_error():
    with pytest.raises(ConfigError, match="haptics.rate"):
        load_packaged("glass_cube_grasp").with_overrides(haptics__rate=50.0)


def test_non_finite_state_aborts_with_partial_trace(monkeypatch):
    real_step = runner_mod.step

    def failing(world, *args, **kwargs):
        if world.step_index >= 20:
            raise SimulationError("non-finite velocity on body 1")
        return real_step(world, *args, **kwargs)

    monkeypatch.setattr(runner_mod, "step", failing)
    with pytest.raises(RunAborted, match="non-finite") as info:
        run(load_packaged("glass_cube_grasp"))
    trace = info.value.trace
    assert len(trace.physics) == 20
    assert trace.physics.column("tick")[-1] == 20
    assert trace.metrics.outcome is Outcome.TIMEOUT
    assert any("non-finite" in d for d in trace.metrics.diagnostics)
