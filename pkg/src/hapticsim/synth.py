"""Haptic waveform synthesis.

Physics runs at 100 Hz and hands over per-finger events; the synthesiser
holds pressure and slip speed between ticks and evaluates the oscillating
terms in continuous time at the output rate:

* collide: ``A * exp(-B*tau) * sin(omega*tau)`` added on top of the pressure,
  silenced once ``tau`` reaches the cutoff;
* stick-slip: one such transient at every static/kinetic transition;
* slide: ``F * v * sin(omega_slide * t)`` while the contact slides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .physics.bodies import FrictionState

MIN_RATE = 100.0
MAX_RATE = 500.0


class SynthError(ValueError):
    pass


class HapticMode(str, Enum):
    ON = "on"
    OFF = "off"
    PRESSURE = "pressure"
    VIBRATION = "vibration"


@dataclass(frozen=True)
class MaterialTransientParams:
    B: float = 469.0
    omega: float = 2.0 * math.pi * 128.0
    cutoff: float = 0.1

    def __post_init__(self):
        for name in ("B", "omega", "cutoff"):
            if not getattr(self, name) > 0:
                raise SynthError(f"{name} must be > 0")

    def transient(self, amplitude: float, tau):
        """Decaying sinusoid; zero before onset and from the cutoff on."""
        tau = np.asarray(tau, dtype=float)
        live = (tau >= 0.0) & (tau < self.cutoff)
        safe = np.where(live, tau, 0.0)
        return np.where(live, amplitude * np.exp(-self.B * safe) * np.sin(self.omega * safe), 0.0)


@dataclass(frozen=True)
class AmplitudeMap:
    """Collision speed to transient amplitude: ``min(gain * speed, max_amplitude)``."""

    gain: float = 1.0  # N*s/m
    max_amplitude: float = 1.0  # N

    def __call__(self, speed: float) -> float:
        return min(self.gain * abs(speed), self.max_amplitude)


@dataclass(frozen=True)
class Collide:
    amplitude: float


@dataclass(frozen=True)
class StickSlipTransition:
    before: FrictionState
    after: FrictionState
    amplitude: float


@dataclass(frozen=True)
class StateUpdate:
    force: float
    speed: float
    friction_state: FrictionState


@dataclass(frozen=True)
class HapticEvent:
    finger: str
    timestamp: float
    kind: Collide | StickSlipTransition | StateUpdate

    def __post_init__(self):
        k = self.kind
        if isinstance(k, (Collide, StickSlipTransition)) and not k.amplitude >= 0:
            raise SynthError(f"finger {self.finger}: negative amplitude {k.amplitude}")
        if isinstance(k, StateUpdate) and not (k.force >= 0 and k.speed >= 0):
            raise SynthError(f"finger {self.finger}: negative force or speed in state update")


@dataclass(frozen=True)
class FingerSynth:
    transients: tuple[tuple[float, float], ...] = ()  # (start, amplitude)
    force: float = 0.0
    speed: float = 0.0
    friction_state: FrictionState = FrictionState.SEPARATED
    last_timestamp: float = -math.inf


@dataclass(frozen=True)
class SynthState:
    fingers: dict[str, FingerSynth] = field(default_factory=dict)
    params: MaterialTransientParams = field(default_factory=MaterialTransientParams)
    slide_omega: float = 2.0 * math.pi * 100.0
    mode: HapticMode = HapticMode.ON
    # slide oscillator phase at the last rendered sample, in [0, 2*pi)
    phase: float = 0.0

    @classmethod
    def for_fingers(cls, names, **kwargs) -> "SynthState":
        return cls(fingers={n: FingerSynth() for n in names}, **kwargs)


def ingest(events: list[HapticEvent], state: SynthState) -> SynthState:
    """Fold a batch of events into a new state (the input is left untouched)."""
    if not events:
        return state
    fingers = dict(state.fingers)
    cutoff = state.params.cutoff
    for ev in events:
        f = fingers.get(ev.finger, FingerSynth())
        if ev.timestamp < f.last_timestamp:
            raise SynthError(
                f"finger {ev.finger}: event at t={ev.timestamp} precedes last ingested t={f.last_timestamp}"
            )
        kept = tuple(tr for tr in f.transients if tr[0] + cutoff > ev.timestamp)
        k = ev.kind
        if isinstance(k, (Collide, StickSlipTransition)):
            f = replace(f, transients=kept + ((ev.timestamp, k.amplitude),), last_timestamp=ev.timestamp)
        else:
            f = replace(
                f,
                transients=kept,
                force=k.force,
                speed=k.speed,
                friction_state=k.friction_state,
                last_timestamp=ev.timestamp,
            )
        fingers[ev.finger] = f
    return replace(state, fingers=fingers)


def _finger_terms(f: FingerSynth, state: SynthState, t: np.ndarray):
    """(pressure, transient sum, slide term, envelope) arrays at times ``t``."""
    p = state.params
    trans = np.zeros_like(t)
    env = np.zeros_like(t)
    for start, amp in f.transients:
        tau = t - start
        trans = trans + p.transient(amp, tau)
        live = (tau >= 0.0) & (tau < p.cutoff)
        env = env + np.where(live, amp * np.exp(-p.B * np.where(live, tau, 0.0)), 0.0)
    slide = np.zeros_like(t)
    if f.friction_state == FrictionState.DYNAMIC:
        amp = f.force * f.speed
        slide = amp * np.sin(state.slide_omega * t)
        env = env + amp
    return np.full_like(t, f.force), trans, slide, env


def _mix(state: SynthState, f: FingerSynth, t: np.ndarray) -> np.ndarray:
    press, trans, slide, env = _finger_terms(f, state, t)
    mode = state.mode
    if mode == HapticMode.OFF:
        out = np.zeros_like(t)
    elif mode == HapticMode.PRESSURE:
        out = press
    elif mode == HapticMode.VIBRATION:
        # no steady pressure: bias the vibration by its own envelope so it stays pullable
        out = env + trans + slide
    else:
        out = press + trans + slide
    return np.maximum(out, 0.0)


def sample(state: SynthState, t: float) -> dict[str, float]:
    """Force command per finger at time ``t`` (N, never negative)."""
    times = np.array([float(t)])
    return {name: float(_mix(state, f, times)[0]) for name, f in state.fingers.items()}


def render_block(
    state: SynthState, t0: float, n_samples: int, sample_rate: float
) -> tuple[dict[str, np.ndarray], SynthState]:
    """``n_samples`` samples from ``t0`` at ``1/sample_rate`` spacing, per finger.

    Sample times are ``t0 + i / sample_rate``; the slide phase follows the
    global clock, so consecutive blocks join without phase jumps.
    """
    if not MIN_RATE <= sample_rate <= MAX_RATE:
        raise SynthError(f"sample_rate {sample_rate} Hz outside [{MIN_RATE:g}, {MAX_RATE:g}]")
    if n_samples < 1:
        raise SynthError("n_samples must be >= 1")
    times = t0 + np.arange(n_samples) / sample_rate
    block = {name: _mix(state, f, times) for name, f in state.fingers.items()}
    phase = math.fmod(state.slide_omega * float(times[-1]), 2.0 * math.pi)
    if phase < 0:
        phase += 2.0 * math.pi
    return block, replace(state, phase=phase)


def sample_times(t_start: float, t_end: float, sample_rate: float) -> np.ndarray:
    """Global output-clock instants ``i / sample_rate`` in ``[t_start, t_end)``."""
    first = math.ceil(t_start * sample_rate - 1e-9)
    last = math.ceil(t_end * sample_rate - 1e-9)
    return np.arange(first, last) / sample_rate


def render_times(state: SynthState, times: np.ndarray) -> dict[str, np.ndarray]:
    """Per-finger commands at arbitrary (sorted) sample instants."""
    times = np.asarray(times, dtype=float)
    return {name: _mix(state, f, times) for name, f in state.fingers.items()}


def tick_events(
    finger: str,
    time: float,
    previous,
    current,
    transitions,
    amplitude: AmplitudeMap = AmplitudeMap(),
) -> list[HapticEvent]:
    """Events for one finger after one physics tick.

    ``previous``/``current`` are fingertip contact states (``None`` before
    the first tick); ``transitions`` are that fingertip's friction events of
    the tick, each with ``before``, ``after`` and ``slip_speed``.
    """
    out = []
    was_touching = previous is not None and previous.friction_state != FrictionState.SEPARATED
    touching = current.friction_state != FrictionState.SEPARATED
    if touching and not was_touching:
        out.append(HapticEvent(finger, time, Collide(amplitude(current.approach_speed))))
    for ev in transitions:
        out.append(HapticEvent(finger, time, StickSlipTransition(ev.before, ev.after, amplitude(ev.slip_speed))))
    out.append(HapticEvent(finger, time, StateUpdate(current.normal_force, current.tangential_speed, current.friction_state)))
    return out
