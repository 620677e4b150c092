"""Rigid bodies, joints, contacts and the immutable world state."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .math3d import cross, norm3, IDENTITY_QUAT, quat_to_matrix


class WorldError(ValueError):
    """Invalid world construction (degenerate shape, bad mass, bad friction)."""


class SimulationError(RuntimeError):
    """A step produced a non-finite state; the input world is left untouched."""


@dataclass(frozen=True)
class Sphere:
    radius: float

    def bounding_radius(self) -> float:
        return self.radius


@dataclass(frozen=True)
class Box:
    half_extents: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "_radius", math.sqrt(sum(h * h for h in self.half_extents)))

    def bounding_radius(self) -> float:
        return self._radius


@dataclass(frozen=True)
class HalfSpace:
    """Static half-space whose boundary plane passes through the body origin.

    The outward normal is the body-frame +z axis.
    """

    def bounding_radius(self) -> float:
        return float("inf")


Shape = Sphere | Box | HalfSpace


def shape_inertia(shape: Shape, mass: float) -> np.ndarray:
    if isinstance(shape, Sphere):
        return np.eye(3) * (0.4 * mass * shape.radius**2)
    if isinstance(shape, Box):
        x, y, z = (2.0 * h for h in shape.half_extents)
        return np.diag([mass * (y * y + z * z), mass * (x * x + z * z), mass * (x * x + y * y)]) / 12.0
    raise WorldError("half-spaces must be static")


class FrictionState(enum.IntEnum):
    SEPARATED = 0
    STATIC = 1
    DYNAMIC = 2


@dataclass(frozen=True)
class RigidBody:
    id: int
    shape: Shape
    mass: float = 1.0
    inertia: np.ndarray | None = None
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mu_static: float = 0.5
    mu_dynamic: float = 0.5
    is_static: bool = False
    name: str = ""
    # bodies sharing a nonzero group never collide with each other
    group: int = 0

    def __post_init__(self):
        for attr in ("position", "orientation", "linear_velocity", "angular_velocity"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float))
        if self.inertia is None and not self.is_static:
            object.__setattr__(self, "inertia", shape_inertia(self.shape, self.mass))
        elif self.inertia is not None:
            object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float))

    @property
    def rotation(self) -> np.ndarray:
        # cached per instance; states are immutable so the orientation cannot change under it
        rot = self.__dict__.get("_rotation")
        if rot is None:
            rot = quat_to_matrix(self.orientation)
            object.__setattr__(self, "_rotation", rot)
        return rot

    @property
    def inv_mass(self) -> float:
        return 0.0 if self.is_static else 1.0 / self.mass

    def world_inertia(self) -> np.ndarray:
        if self.is_static:
            return np.zeros((3, 3))
        r = self.rotation
        return r @ self.inertia @ r.T

    def world_inv_inertia(self) -> np.ndarray:
        if self.is_static:
            return np.zeros((3, 3))
        r = self.rotation
        return r @ np.linalg.inv(self.inertia) @ r.T

    def point_velocity(self, point: np.ndarray) -> np.ndarray:
        return self.linear_velocity + cross(self.angular_velocity, point - self.position)

    def kinetic_energy(self) -> float:
        if self.is_static:
            return 0.0
        w = self.angular_velocity
        return 0.5 * self.mass * float(self.linear_velocity @ self.linear_velocity) + 0.5 * float(
            w @ self.world_inertia() @ w
        )


@dataclass(frozen=True)
class BallJoint:
    body_a: int
    body_b: int
    anchor_a: np.ndarray  # body-frame anchor on a
    anchor_b: np.ndarray  # body-frame anchor on b

    def world_anchors(self, bodies) -> tuple[np.ndarray, np.ndarray]:
        a, b = bodies[self.body_a], bodies[self.body_b]
        return a.position + a.rotation @ self.anchor_a, b.position + b.rotation @ self.anchor_b


@dataclass(frozen=True)
class Contact:
    body_a: int
    body_b: int
    point: np.ndarray
    normal: np.ndarray  # unit, from b towards a
    penetration_depth: float = 0.0
    # positive separation of a speculative contact (penetration_depth is then 0)
    gap: float = 0.0
    relative_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    friction_state: FrictionState = FrictionState.SEPARATED
    feature: int = 0
    # closing speed along the normal before the step's solve
    approach_speed: float = 0.0

    def _kinematics(self):
        # (normal speed, tangential velocity, tangential speed), computed once per instance
        kin = self.__dict__.get("_kin")
        if kin is None:
            vn = float(self.relative_velocity @ self.normal)
            vt = self.relative_velocity - vn * self.normal
            kin = (vn, vt, norm3(vt))
            object.__setattr__(self, "_kin", kin)
        return kin

    @property
    def normal_velocity(self) -> float:
        return self._kinematics()[0]

    @property
    def tangential_velocity(self) -> np.ndarray:
        return self._kinematics()[1]

    @property
    def tangential_speed(self) -> float:
        return self._kinematics()[2]

    @property
    def pair(self) -> tuple[int, int]:
        return (self.body_a, self.body_b)

    def sort_key(self):
        return (self.body_a, self.body_b, tuple(float(p) for p in self.point))


@dataclass(frozen=True)
class ContactImpulse:
    contact: Contact
    normal_impulse: float
    tangential_impulse: np.ndarray  # components along (t1, t2)
    tangents: tuple[np.ndarray, np.ndarray]
    mu: float

    @property
    def tangential_vector(self) -> np.ndarray:
        return self.tangential_impulse[0] * self.tangents[0] + self.tangential_impulse[1] * self.tangents[1]

    @property
    def tangential_magnitude(self) -> float:
        return math.hypot(float(self.tangential_impulse[0]), float(self.tangential_impulse[1]))


@dataclass(frozen=True)
class FrictionEvent:
    body_a: int
    body_b: int
    time: float
    step_index: int
    before: FrictionState
    after: FrictionState
    slip_speed: float

    @property
    def is_slip_onset(self) -> bool:
        return self.before != FrictionState.DYNAMIC and self.after == FrictionState.DYNAMIC

    @property
    def is_stick(self) -> bool:
        return self.before == FrictionState.DYNAMIC and self.after == FrictionState.STATIC


@dataclass(frozen=True)
class SolverSettings:
    iterations: int = 60
    tolerance: float = 1e-8
    baumgarte: float = 0.2
    # joint drift is pure integration error, so the position pass removes all of it
    joint_baumgarte: float = 1.0
    slop: float = 1e-4
    slip_speed_epsilon: float = 1e-4
    contact_margin: float = 5e-4
    # diagonal regularisation, relative to the row's effective inverse mass
    cfm: float = 1e-7
    restitution: float = 0.0


@dataclass(frozen=True)
class WorldState:
    bodies: tuple[RigidBody, ...]
    joints: tuple[BallJoint, ...] = ()
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    dt: float = 0.01
    step_index: int = 0
    settings: SolverSettings = field(default_factory=SolverSettings)
    # friction state per body pair, carried between steps
    pair_states: dict = field(default_factory=dict)
    # (body_a, body_b, feature) -> world-frame impulse, for warm starting
    warm_start: dict = field(default_factory=dict)
    trusted: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))
        if not self.trusted:
            validate_world(self)

    @property
    def time(self) -> float:
        return self.step_index * self.dt

    def body(self, body_id: int) -> RigidBody:
        return self.bodies[body_id]

    def by_name(self, name: str) -> RigidBody:
        for b in self.bodies:
            if b.name == name:
                return b
        raise KeyError(name)

    def kinetic_energy(self) -> float:
        return sum(b.kinetic_energy() for b in self.bodies)

    def evolve(self, **changes) -> "WorldState":
        # successors of a validated world keep shapes, masses and frictions
        return replace(self, trusted=True, **changes)


def validate_world(world: WorldState) -> None:
    problems = []
    if not world.dt > 0:
        problems.append(f"dt must be positive, got {world.dt}")
    for i, b in enumerate(world.bodies):
        if b.id != i:
            problems.append(f"body at index {i} has id {b.id}")
        label = b.name or f"body {b.id}"
        if isinstance(b.shape, Box) and min(b.shape.half_extents) <= 0:
            problems.append(f"{label}: degenerate box half-extents {b.shape.half_extents}")
        if isinstance(b.shape, Sphere) and b.shape.radius <= 0:
            problems.append(f"{label}: degenerate sphere radius {b.shape.radius}")
        if isinstance(b.shape, HalfSpace) and not b.is_static:
            problems.append(f"{label}: half-space must be static")
        if not b.is_static:
            if not b.mass > 0:
                problems.append(f"{label}: mass must be positive")
            inertia = b.inertia
            if inertia is None or inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T):
                problems.append(f"{label}: inertia must be a symmetric 3x3 tensor")
            elif np.linalg.eigvalsh(inertia).min() <= 0:
                problems.append(f"{label}: inertia must be positive definite")
        if not 0 <= b.mu_dynamic <= b.mu_static:
            problems.append(f"{label}: need 0 <= mu_dynamic <= mu_static")
        if abs(float(np.linalg.norm(b.orientation)) - 1.0) > 1e-9:
            problems.append(f"{label}: orientation quaternion not normalised")
    n = len(world.bodies)
    for j in world.joints:
        if not (0 <= j.body_a < n and 0 <= j.body_b < n) or j.body_a == j.body_b:
            problems.append(f"joint {j.body_a}-{j.body_b} references invalid bodies")
    if problems:
        raise WorldError("; ".join(problems))
