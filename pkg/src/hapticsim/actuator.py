"""Motor-and-string actuator model: current/force map, perception threshold, resonance."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class ActuatorError(ValueError):
    pass


class SaturationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Resonance:
    f_peak: float = 140.0  # Hz
    q_factor: float = 2.0

    @property
    def natural_frequency(self) -> float:
        """Undamped natural frequency whose magnitude response peaks at ``f_peak``."""
        zeta = 1.0 / (2.0 * self.q_factor)
        return self.f_peak / math.sqrt(1.0 - 2.0 * zeta * zeta)

    @property
    def gain_peak(self) -> float:
        zeta = 1.0 / (2.0 * self.q_factor)
        return 1.0 / (2.0 * zeta * math.sqrt(1.0 - zeta * zeta))


@dataclass(frozen=True)
class ActuatorModel:
    max_force: float = 1.36  # N
    theoretical_max: float = 1.57  # N, stall torque over shaft radius
    shaft_radius: float = 1e-3  # m
    current_at_max: float = 0.33  # A
    perception_threshold: float = 0.04  # N
    resonance: Resonance = Resonance()
    current_step: float = 0.03  # A
    saturation_warn_fraction: float = 0.05

    def __post_init__(self):
        problems = []
        if not 0 < self.perception_threshold < self.max_force:
            problems.append("need 0 < perception_threshold < max_force")
        if not self.current_at_max > 0:
            problems.append("current_at_max must be > 0")
        if self.theoretical_max < self.max_force:
            problems.append("theoretical_max must not be below max_force")
        if not 100.0 <= self.resonance.f_peak <= 180.0:
            problems.append("resonance f_peak must lie in [100, 180] Hz")
        if not self.resonance.q_factor > 1.0 / math.sqrt(2.0):
            problems.append("q_factor must exceed 1/sqrt(2) for a resonant peak")
        if self.current_step < 0:
            problems.append("current_step must be >= 0")
        if problems:
            raise ActuatorError("; ".join(problems))

    @property
    def slope(self) -> float:
        """Force per ampere in the linear region (N/A)."""
        return self.max_force / self.current_at_max

    @property
    def stall_torque(self) -> float:
        return self.theoretical_max * self.shaft_radius


def current_to_force(model: ActuatorModel, current):
    i = np.asarray(current, dtype=float)
    if np.any(i < 0):
        raise ActuatorError("negative current: the string can only pull")
    out = np.minimum(i * model.slope, model.max_force)
    return float(out) if out.ndim == 0 else out


def force_to_current(model: ActuatorModel, force, quantize: bool = False):
    """Inverse of the linear region. Returns (current, saturated)."""
    f = np.asarray(force, dtype=float)
    if np.any(f < 0):
        raise ActuatorError("negative force command")
    saturated = f > model.max_force
    i = np.minimum(f, model.max_force) / model.slope
    if quantize and model.current_step > 0:
        i = np.minimum(np.round(i / model.current_step) * model.current_step, model.current_at_max)
    if i.ndim == 0:
        return float(i), bool(saturated)
    return i, saturated


def apply_threshold(model: ActuatorModel, force):
    f = np.asarray(force, dtype=float)
    if np.any(f < 0):
        raise ActuatorError("negative force command")
    out = np.where((f > 0) & (f < model.perception_threshold), model.perception_threshold, f)
    return float(out) if out.ndim == 0 else out


def frequency_response(model: ActuatorModel, freq):
    """Magnitude of the normalised second-order response (DC gain 1)."""
    f = np.asarray(freq, dtype=float)
    if np.any((f < 10.0) | (f > 500.0)):
        raise ActuatorError("frequency outside [10, 500] Hz")
    r = f / model.resonance.natural_frequency
    zeta = 1.0 / (2.0 * model.resonance.q_factor)
    out = 1.0 / np.sqrt((1.0 - r * r) ** 2 + (2.0 * zeta * r) ** 2)
    return float(out) if out.ndim == 0 else out


def mechanical_filter(model: ActuatorModel, sample_rate: float):
    """Discrete (b, a) of the resonance, bilinear with the peak prewarped."""
    from scipy import signal

    wn = 2.0 * math.pi * model.resonance.natural_frequency
    zeta = 1.0 / (2.0 * model.resonance.q_factor)
    return signal.bilinear([wn * wn], [1.0, 2.0 * zeta * wn, wn * wn], fs=sample_rate)


@dataclass
class CommandStream:
    current: np.ndarray  # A
    saturated: np.ndarray  # bool per sample
    saturation_time: float  # s spent saturated in this block


def render_command_stream(model: ActuatorModel, forces, sample_rate: float, quantize: bool = False) -> CommandStream:
    """Threshold, then convert a non-negative force block to currents."""
    f = np.asarray(forces, dtype=float)
    if np.any(f < 0):
        raise ActuatorError("force block contains negative samples")
    current, saturated = force_to_current(model, apply_threshold(model, f), quantize=quantize)
    current = np.atleast_1d(current)
    saturated = np.atleast_1d(saturated)
    if saturated.size and saturated.mean() > model.saturation_warn_fraction:
        warnings.warn(
            f"{saturated.mean():.1%} of samples saturated at {model.max_force} N", SaturationWarning, stacklevel=2
        )
    return CommandStream(current, saturated, float(saturated.sum()) / sample_rate)


def vibration_pattern(model: ActuatorModel, freq: float, peak_to_peak: float, duration: float, sample_rate: float):
    """Test sinusoid biased by half its peak-to-peak so it never goes slack."""
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    return 0.5 * peak_to_peak * (1.0 + np.sin(2.0 * math.pi * freq * t))


def dominant_frequency(x, sample_rate: float) -> tuple[float, float]:
    """Frequency of the largest non-DC FFT bin and the bin width."""
    x = np.asarray(x, dtype=float)
    spec = np.abs(np.fft.rfft(x - x.mean()))
    freqs = np.fft.rfftfreq(len(x), 1.0 / sample_rate)
    return float(freqs[int(np.argmax(spec[1:])) + 1]), float(freqs[1])
