import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hapticsim.actuator import (
    ActuatorError,
    ActuatorModel,
    Resonance,
    SaturationWarning,
    apply_threshold,
    current_to_force,
    dominant_frequency,
    force_to_current,
    frequency_response,
    mechanical_filter,
    render_command_stream,
    vibration_pattern,
)

M = ActuatorModel()
forces = st.floats(0.0, 1.36)


# ---------------------------------------------------------------- force/current map


@pytest.mark.parametrize(
    "current, force",
    [(0.0, 0.0), (0.33, 1.36), (0.165, 0.68), (0.5, 1.36)],
)
def test_current_to_force_examples(current, force):
    assert current_to_force(M, current) == pytest.approx(force, abs=1e-12)


def test_force_to_current_examples():
    assert force_to_current(M, 0.0) == (0.0, False)
    i, sat = force_to_current(M, 1.36)
    assert i == pytest.approx(0.33, abs=1e-15) and not sat


def test_quantized_midpoint_within_half_step():
    i, _ = force_to_current(M, 0.68, quantize=True)
    assert (i / 0.03) == pytest.approx(round(i / 0.03), abs=1e-9)
    assert abs(current_to_force(M, i) - 0.68) <= 0.5 * 0.03 * M.slope + 1e-12


def test_over_range_force_is_clamped_and_flagged():
    i, sat = force_to_current(M, 2.0)
    assert sat
    assert i == pytest.approx(M.current_at_max)


def test_negative_inputs_rejected():
    with pytest.raises(ActuatorError):
        current_to_force(M, -0.01)
    with pytest.raises(ActuatorError):
        force_to_current(M, -0.01)
    with pytest.raises(ActuatorError):
        apply_threshold(M, -0.01)


def test_model_validation():
    with pytest.raises(ActuatorError, match="perception_threshold"):
        ActuatorModel(perception_threshold=2.0)
    with pytest.raises(ActuatorError, match="theoretical_max"):
        ActuatorModel(theoretical_max=1.0)
    with pytest.raises(ActuatorError, match="f_peak"):
        ActuatorModel(resonance=Resonance(f_peak=200.0))


def test_theoretical_max_from_stall_torque():
    assert M.stall_torque / M.shaft_radius == pytest.approx(1.57)
    assert M.stall_torque / M.shaft_radius >= M.max_force


@settings(max_examples=100)
@given(a=st.floats(0.0, 1.0), b=st.floats(0.0, 1.0))
def test_current_to_force_non_decreasing(a, b):
    lo, hi = sorted((a, b))
    assert current_to_force(M, lo) <= current_to_force(M, hi)


@settings(max_examples=100)
@given(a=forces, b=forces)
def test_force_to_current_strictly_increasing(a, b):
    if a != b:
        lo, hi = sorted((a, b))
        assert force_to_current(M, lo)[0] < force_to_current(M, hi)[0]


@settings(max_examples=200)
@given(f=forces)
def test_round_trip(f):
    assert abs(current_to_force(M, force_to_current(M, f)[0]) - f) <= 1e-12
    iq, _ = force_to_current(M, f, quantize=True)
    assert abs(current_to_force(M, iq) - f) <= 0.5 * M.current_step * M.slope + 1e-12


@settings(max_examples=100)
@given(
    current_at_max=st.floats(0.1, 1.0),
    max_force=st.floats(0.5, 1.5),
    f=st.floats(0.0, 1.0),
)
def test_round_trip_for_other_models(current_at_max, max_force, f):
    model = ActuatorModel(max_force=max_force, current_at_max=current_at_max, theoretical_max=2.0)
    f = f * max_force
    assert abs(current_to_force(model, force_to_current(model, f)[0]) - f) <= 1e-12


# ---------------------------------------------------------------- threshold


@pytest.mark.parametrize("f, out", [(0.0, 0.0), (0.02, 0.04), (0.04, 0.04), (0.5, 0.5)])
def test_threshold_examples(f, out):
    assert apply_threshold(M, f) == out


@settings(max_examples=100)
@given(f=st.floats(0.0, 2.0))
def test_threshold_idempotent(f):
    once = apply_threshold(M, f)
    assert apply_threshold(M, once) == once


# ---------------------------------------------------------------- frequency response


def test_response_normalised_at_dc():
    assert frequency_response(M, 10.0) == pytest.approx(1.0, abs=0.01)


def test_response_peak_in_band_and_single():
    f = np.arange(10.0, 500.5, 0.5)
    g = frequency_response(M, f)
    peak = f[np.argmax(g)]
    assert 100.0 <= peak <= 180.0
    assert peak == pytest.approx(M.resonance.f_peak, abs=0.5)
    k = int(np.argmax(g))
    assert np.all(np.diff(g[: k + 1]) > 0)
    assert np.all(np.diff(g[k:]) < 0)
    assert frequency_response(M, 140.0) > frequency_response(M, 50.0)
    assert frequency_response(M, 140.0) > frequency_response(M, 300.0)
    assert g.max() == pytest.approx(M.resonance.gain_peak, rel=1e-6)


def test_response_range_checked():
    with pytest.raises(ActuatorError):
        frequency_response(M, 5.0)
    with pytest.raises(ActuatorError):
        frequency_response(M, 600.0)


def test_discrete_filter_keeps_dc_gain():
    b, a = mechanical_filter(M, 2000.0)
    assert np.sum(b) / np.sum(a) == pytest.approx(1.0, rel=1e-9)


# ---------------------------------------------------------------- command stream


def test_zero_block_gives_zero_currents():
    out = render_command_stream(M, np.zeros(50), 500.0)
    assert np.all(out.current == 0.0)
    assert out.current.shape == (50,)


def test_saturated_block_warns_and_counts_time():
    with pytest.warns(SaturationWarning):
        out = render_command_stream(M, np.full(100, 1.5), 500.0)
    assert np.all(out.current == pytest.approx(M.current_at_max))
    assert out.saturation_time == pytest.approx(0.2)


def test_constant_max_force_is_not_a_saturation():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = render_command_stream(M, np.full(100, 1.36), 500.0)
    assert out.current == pytest.approx(np.full(100, 0.33))


def test_negative_block_rejected():
    with pytest.raises(ActuatorError):
        render_command_stream(M, np.array([0.1, -0.1]), 500.0)


def test_128_hz_pattern_keeps_its_fundamental():
    x = vibration_pattern(M, 128.0, 1.0, 2.0, 2000.0)
    assert np.all(x >= 0.0)
    out = render_command_stream(M, x, 2000.0)
    f, width = dominant_frequency(out.current, 2000.0)
    assert abs(f - 128.0) <= width


def test_frequency_tracking_fit():
    rate, duration = 2000.0, 1.0
    inputs = np.arange(10.0, 501.0, 10.0)
    outputs = []
    for f in inputs:
        out = render_command_stream(M, vibration_pattern(M, f, 1.0, duration, rate), rate)
        got, width = dominant_frequency(out.current, rate)
        assert abs(got - f) <= width
        outputs.append(got)
    slope = np.polyfit(inputs, outputs, 1)[0]
    assert 0.999 <= slope <= 1.001


@settings(max_examples=50)
@given(block=st.lists(st.floats(0.0, 3.0), min_size=1, max_size=50))
def test_commands_stay_in_range(block):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturationWarning)
        out = render_command_stream(M, np.array(block), 500.0, quantize=True)
    assert np.all(out.current >= 0.0)
    assert np.all(out.current <= M.current_at_max + 1e-15)
