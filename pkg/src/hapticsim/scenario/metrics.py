"""Task outcomes, run metrics and the trace-level detectors."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..physics.math3d import quat_to_matrix


class Outcome(str, Enum):
    SUCCESS = "Success"
    DROP_FAILURE = "DropFailure"
    BREAK_FAILURE = "BreakFailure"
    TIMEOUT = "Timeout"

    @property
    def is_failure(self) -> bool:
        return self is not Outcome.SUCCESS


class PegStatus(str, Enum):
    FREE = "Free"
    RIM_CONTACT = "RimContact"
    IN_HOLE = "InHole"
    PASSED = "Passed"


@dataclass
class RunMetrics:
    outcome: Outcome
    pinch_distance: np.ndarray = field(default_factory=lambda: np.zeros(0))
    total_grip_force: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slip_onset: float | None = None  # T1
    response: float | None = None  # T2
    failure_count: int = 0
    completion_time: float | None = None
    end_time: float = 0.0
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        if self.slip_onset is not None and self.response is not None and self.response < self.slip_onset:
            raise ValueError("response precedes slip onset")
        if (self.completion_time is not None) != (self.outcome is Outcome.SUCCESS):
            raise ValueError("completion_time is present exactly for successful runs")

    @property
    def latency(self) -> float | None:
        if self.slip_onset is None or self.response is None:
            return None
        return self.response - self.slip_onset

    def __eq__(self, other):
        if not isinstance(other, RunMetrics):
            return NotImplemented
        return (
            self.outcome == other.outcome
            and np.array_equal(self.pinch_distance, other.pinch_distance)
            and np.array_equal(self.total_grip_force, other.total_grip_force)
            and self.slip_onset == other.slip_onset
            and self.response == other.response
            and self.failure_count == other.failure_count
            and self.completion_time == other.completion_time
            and self.end_time == other.end_time
            and tuple(self.diagnostics) == tuple(other.diagnostics)
        )


def batch_failure_count(metrics) -> int:
    return sum(1 for m in metrics if m.outcome.is_failure)


# ---------------------------------------------------------------- slip / response


def slipping(object_vz: float, tip_vz, contacted, epsilon: float) -> bool:
    """Object sliding relative to the contacting fingertips."""
    vz = [v for v, c in zip(tip_vz, contacted) if c]
    if not vz:
        return False
    return abs(object_vz - sum(vz) / len(vz)) > epsilon


def detect_slip_onset(times, object_vz, tip_vz, contacted, epsilon: float, after: float = -math.inf):
    """T1: first tick (at or after ``after``) with relative vertical slip while touching.

    ``tip_vz`` and ``contacted`` are (ticks, fingers) arrays.
    """
    for k, t in enumerate(times):
        if t < after:
            continue
        if slipping(object_vz[k], tip_vz[k], contacted[k], epsilon):
            return float(t)
    return None


def detect_grasp_response(times, pinch, t1, closure_speed: float = 0.02):
    """T2: first tick after ``t1`` whose backward pinch derivative is below ``-closure_speed``."""
    if t1 is None:
        return None
    times = np.asarray(times, dtype=float)
    pinch = np.asarray(pinch, dtype=float)
    for k in range(1, len(times)):
        if times[k] <= t1:
            continue
        rate = (pinch[k] - pinch[k - 1]) / (times[k] - times[k - 1])
        if rate < -closure_speed:
            return float(times[k])
    return None


def invalid_attempt_notes(times, pinch, touching, t1, closure_speed: float = 0.02, window: float = 0.2) -> list[str]:
    """Trace patterns that would void a human slide-and-regrasp attempt (diagnostics only).

    Flags an opening followed within ``window`` seconds by a closing, both
    faster than ``closure_speed``, that finishes before slip onset; and a
    drop during which no fingertip touches the object after ``t1``.
    """
    times = np.asarray(times, dtype=float)
    pinch = np.asarray(pinch, dtype=float)
    touching = np.asarray(touching, dtype=bool)
    notes = []
    if len(times) > 1:
        rate = np.diff(pinch) / np.diff(times)
        t = times[1:]
        opening = t[rate > closure_speed]
        closing = t[rate < -closure_speed]
        for tc in closing:
            if t1 is not None and tc >= t1:
                break
            if np.any((opening < tc) & (opening >= tc - window)):
                notes.append(f"invalid attempt: rapid open-close ending at t={tc:.6g}")
                break
    if t1 is not None:
        after = touching[times > t1]
        if len(after) and not after.any():
            notes.append("invalid attempt: no fingertip contact after slip onset")
    return notes


# ---------------------------------------------------------------- peg


_SIGNS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
_EDGES = [(i, j) for i in range(8) for j in range(i + 1, 8) if np.sum(_SIGNS[i] != _SIGNS[j]) == 1]


@dataclass(frozen=True)
class Hole:
    center: tuple[float, float]
    size: float  # square side
    bottom: float  # z of the lower face of the holed plate
    thickness: float

    @property
    def top(self) -> float:
        return self.bottom + self.thickness


def box_vertices(position, orientation, half_extents) -> np.ndarray:
    rot = quat_to_matrix(np.asarray(orientation, dtype=float))
    return np.asarray(position, dtype=float) + (_SIGNS * np.asarray(half_extents)) @ rot.T


def _slab_section(verts: np.ndarray, z0: float, z1: float) -> np.ndarray:
    """Vertices of the box clipped to the slab z0 <= z <= z1 (xy only)."""
    pts = [v for v in verts if z0 <= v[2] <= z1]
    for i, j in _EDGES:
        a, b = verts[i], verts[j]
        for z in (z0, z1):
            if (a[2] - z) * (b[2] - z) < 0:
                s = (z - a[2]) / (b[2] - a[2])
                pts.append(a + s * (b - a))
    return np.array([p[:2] for p in pts]).reshape(-1, 2)


def peg_status(position, orientation, half_extents, hole: Hole, entered: bool = True) -> PegStatus:
    """Where a box peg sits relative to a square hole through a horizontal plate.

    Passed means the whole peg is above the plate's top face after having
    entered the hole (``entered``).
    """
    verts = box_vertices(position, orientation, half_extents)
    zmin, zmax = float(verts[:, 2].min()), float(verts[:, 2].max())
    if zmin >= hole.top:
        return PegStatus.PASSED if entered else PegStatus.FREE
    if zmax <= hole.bottom:
        return PegStatus.FREE
    section = _slab_section(verts, hole.bottom, hole.top)
    half = 0.5 * hole.size
    dx = np.abs(section[:, 0] - hole.center[0])
    dy = np.abs(section[:, 1] - hole.center[1])
    if np.all(dx <= half) and np.all(dy <= half):
        return PegStatus.IN_HOLE
    return PegStatus.RIM_CONTACT
