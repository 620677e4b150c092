import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hapticsim.physics import step
from hapticsim.physics.math3d import quat_from_axis_angle
from hapticsim.scenario.metrics import (
    Hole,
    Outcome,
    PegStatus,
    RunMetrics,
    batch_failure_count,
    detect_grasp_response,
    detect_slip_onset,
    invalid_attempt_notes,
    peg_status,
)

import scenes

DT = 0.01
MG = 0.3 * scenes.G
MU_S = 0.15
HOLD = MG / MU_S  # press force at the Coulomb limit
HOLE = Hole(center=(0.0, 0.0), size=0.0395, bottom=1.04, thickness=0.025)
PEG_HALF = (0.0175, 0.0175, 0.05)


def wall_slip_onset(press, ticks, epsilon=1e-3):
    """Run the wall block under press(k) newtons and detect T1 from its trace."""
    world = scenes.wall_block(mu_s=MU_S)
    times, vz, touching = [], [], []
    for k in range(1, ticks + 1):
        world, diag = step(world, {1: (np.array([-press(k), 0.0, 0.0]), np.zeros(3))})
        times.append(world.time)
        vz.append(world.bodies[1].linear_velocity[2])
        touching.append([bool(diag.contacts)])
    return detect_slip_onset(times, vz, np.zeros((ticks, 1)), np.array(touching), epsilon)


def first_slip_tick(press):
    """Analytic: first tick whose press can no longer carry the weight through static friction."""
    return next(k for k in range(1, 100000) if MU_S * press(k) < MG)


# ---------------------------------------------------------------- slip onset


def test_rigid_hold_never_slips():
    assert wall_slip_onset(lambda k: 2 * HOLD, 200) is None


def test_release_at_tick_150():
    press = lambda k: 2 * HOLD if k < 150 else 0.5 * HOLD  # noqa: E731
    assert first_slip_tick(press) == 150
    assert abs(wall_slip_onset(press, 200) - 1.50) <= DT + 1e-12


@pytest.mark.parametrize("rate", [5.0, 10.0, 20.0, 40.0])
def test_gradual_release_matches_coulomb_crossing(rate):
    press = lambda k: 1.5 * HOLD - rate * DT * max(0, k - 150)  # noqa: E731
    k_star = first_slip_tick(press)
    t1 = wall_slip_onset(press, k_star + 20)
    assert abs(t1 - k_star * DT) <= DT + 1e-12


def test_free_fall_without_contact_is_not_slip():
    times = np.arange(1, 101) * DT
    vz = -scenes.G * times
    assert detect_slip_onset(times, vz, np.zeros((100, 2)), np.zeros((100, 2), bool), 1e-3) is None


def test_slip_is_relative_to_the_touching_fingertips():
    times = np.arange(1, 11) * DT
    vz = np.full(10, -0.05)
    tips = np.column_stack([np.full(10, -0.05), np.full(10, 0.3)])
    contacted = np.column_stack([np.ones(10, bool), np.zeros(10, bool)])
    # object moves with the only touching finger
    assert detect_slip_onset(times, vz, tips, contacted, 1e-3) is None
    contacted[4:, 1] = True
    assert detect_slip_onset(times, vz, tips, contacted, 1e-3) == pytest.approx(0.05)


# ---------------------------------------------------------------- grasp response


def closing_profile(t1, delay, n=200, speed=0.05, width=0.03):
    times = np.arange(n) * DT
    pinch = np.where(times < t1 + delay, width, width - speed * (times - t1 - delay))
    return times, np.maximum(pinch, 0.0)


@pytest.mark.parametrize("delay", [0.10, 0.25, 0.40])
def test_injected_delay_is_recovered(delay):
    t1 = 0.5
    times, pinch = closing_profile(t1, delay)
    t2 = detect_grasp_response(times, pinch, t1)
    assert abs((t2 - t1) - delay) <= DT + 1e-12


def test_immediate_closure_within_one_tick():
    times, pinch = closing_profile(0.5, 0.0)
    assert detect_grasp_response(times, pinch, 0.5) - 0.5 <= DT + 1e-12


def test_opening_fingers_never_respond():
    times = np.arange(100) * DT
    assert detect_grasp_response(times, 0.03 + 0.01 * times, 0.2) is None


def test_no_response_without_slip():
    times, pinch = closing_profile(0.5, 0.1)
    assert detect_grasp_response(times, pinch, None) is None


def test_slow_drift_below_closure_speed_is_ignored():
    times = np.arange(100) * DT
    assert detect_grasp_response(times, 0.03 - 0.019 * times, 0.0) is None


@settings(max_examples=60)
@given(t1=st.integers(10, 100), delay=st.integers(0, 60), speed=st.floats(0.021, 0.5))
def test_response_latency_property(t1, delay, speed):
    t1s = t1 * DT
    times, pinch = closing_profile(t1s, delay * DT, n=300, speed=speed, width=1.0)
    t2 = detect_grasp_response(times, pinch, t1s)
    assert t2 > t1s
    assert abs((t2 - t1s) - delay * DT) <= DT + 1e-9


def test_clean_attempt_has_no_notes():
    times, pinch = closing_profile(0.5, 0.25)
    assert invalid_attempt_notes(times, pinch, np.ones(len(times), bool), 0.5) == []


def test_rapid_open_close_before_slip_is_flagged():
    times = np.arange(100) * DT
    pinch = np.full(100, 0.03)
    pinch[20:25] += 0.002 * np.arange(1, 6)  # open at 0.2 m/s
    pinch[25:30] = pinch[24] - 0.002 * np.arange(1, 6)  # close straight after
    notes = invalid_attempt_notes(times, pinch, np.ones(100, bool), 0.6)
    assert notes == ["invalid attempt: rapid open-close ending at t=0.25"]
    # the same motion after slip onset is a grasp response, not an invalid attempt
    assert invalid_attempt_notes(times, pinch, np.ones(100, bool), 0.1) == []


def test_slow_reclose_is_not_rapid():
    times = np.arange(100) * DT
    pinch = np.full(100, 0.03)
    pinch[10:15] += 0.002 * np.arange(1, 6)
    pinch[15:] = pinch[14]
    pinch[60:65] = pinch[14] - 0.002 * np.arange(1, 6)
    pinch[65:] = pinch[64]
    assert invalid_attempt_notes(times, pinch, np.ones(100, bool), 0.9) == []


def test_fall_without_contact_is_flagged():
    times = np.arange(100) * DT
    touching = times <= 0.5
    notes = invalid_attempt_notes(times, np.full(100, 0.03), touching, 0.5)
    assert notes == ["invalid attempt: no fingertip contact after slip onset"]
    touching[70] = True
    assert invalid_attempt_notes(times, np.full(100, 0.03), touching, 0.5) == []


# ---------------------------------------------------------------- peg status


def peg_at(x, z, tilt=0.0):
    return peg_status([x, 0.0, z], quat_from_axis_angle([0, 1, 0], tilt), PEG_HALF, HOLE)


def test_centred_peg_is_in_hole():
    assert peg_at(0.0, HOLE.bottom + 0.01) == PegStatus.IN_HOLE


def test_half_centimetre_offset_hits_the_rim():
    clearance = (HOLE.size - 2 * PEG_HALF[0]) / 2
    assert clearance == pytest.approx(0.00225)
    assert peg_at(0.005, HOLE.bottom + 0.01) == PegStatus.RIM_CONTACT
    assert peg_at(0.002, HOLE.bottom + 0.01) == PegStatus.IN_HOLE


def test_peg_beyond_exit_plane_has_passed():
    z = HOLE.top + PEG_HALF[2] + 0.001
    assert peg_at(0.0, z) == PegStatus.PASSED
    assert peg_status([0, 0, z], [1, 0, 0, 0], PEG_HALF, HOLE, entered=False) == PegStatus.FREE


def test_peg_below_plate_is_free():
    assert peg_at(0.03, HOLE.bottom - PEG_HALF[2] - 0.001) == PegStatus.FREE


def test_tilted_peg_touches_the_rim():
    assert peg_at(0.0, HOLE.bottom + 0.01, tilt=0.2) == PegStatus.RIM_CONTACT


@settings(max_examples=100)
@given(x=st.floats(-0.05, 0.05), z=st.floats(0.9, 1.2))
def test_peg_classification_matches_clearance(x, z):
    status = peg_at(x, z)
    bottom, top = z - PEG_HALF[2], z + PEG_HALF[2]
    if bottom >= HOLE.top:
        assert status == PegStatus.PASSED
    elif top <= HOLE.bottom:
        assert status == PegStatus.FREE
    elif abs(x) + PEG_HALF[0] <= HOLE.size / 2:
        assert status == PegStatus.IN_HOLE
    else:
        assert status == PegStatus.RIM_CONTACT


# ---------------------------------------------------------------- run metrics


def test_latency_requires_both_times():
    assert RunMetrics(Outcome.DROP_FAILURE, slip_onset=0.5).latency is None
    m = RunMetrics(Outcome.DROP_FAILURE, slip_onset=0.54, response=0.79)
    assert m.latency == pytest.approx(0.25)


def test_response_before_onset_rejected():
    with pytest.raises(ValueError):
        RunMetrics(Outcome.DROP_FAILURE, slip_onset=0.5, response=0.4)


def test_completion_time_iff_success():
    with pytest.raises(ValueError):
        RunMetrics(Outcome.SUCCESS)
    with pytest.raises(ValueError):
        RunMetrics(Outcome.TIMEOUT, completion_time=3.0)
    assert RunMetrics(Outcome.SUCCESS, completion_time=3.0).completion_time == 3.0


@settings(max_examples=50)
@given(outcomes=st.lists(st.sampled_from(list(Outcome)), max_size=30))
def test_batch_failure_count(outcomes):
    runs = [RunMetrics(o, completion_time=1.0 if o is Outcome.SUCCESS else None) for o in outcomes]
    assert batch_failure_count(runs) == sum(o is not Outcome.SUCCESS for o in outcomes)
