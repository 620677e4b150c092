"""Virtually coupled hand.

Each tracked phalange pose pulls a simulated phalange body through a
spring-damper; adjacent phalanges are tied by ball joints. Fingertip
pressure is read back as ``F = coupling_k * n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .physics.bodies import BallJoint, Contact, FrictionState, RigidBody, Sphere, WorldState
from .physics.math3d import IDENTITY_QUAT, quat_conj, quat_mul, quat_to_matrix, quat_to_rotvec
from .physics.stepper import ImplicitSpring

HAND_GROUP = 1


@dataclass(frozen=True)
class TrackedPose:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for attr in ("position", "orientation", "linear_velocity", "angular_velocity"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float))


@dataclass(frozen=True)
class PhalangeCoupling:
    sim_body: int
    linear_stiffness: float
    linear_damping: float
    angular_stiffness: float = 0.0
    angular_damping: float = 0.0

    def __post_init__(self):
        for name in ("linear_stiffness", "linear_damping", "angular_stiffness", "angular_damping"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"coupling of body {self.sim_body}: {name} must be finite and >= 0, got {value}")

    def spring(self, target: TrackedPose) -> ImplicitSpring:
        return ImplicitSpring(
            body=self.sim_body,
            target_position=target.position,
            target_velocity=target.linear_velocity,
            stiffness=self.linear_stiffness,
            damping=self.linear_damping,
            target_orientation=target.orientation,
            target_angular_velocity=target.angular_velocity,
            angular_stiffness=self.angular_stiffness,
            angular_damping=self.angular_damping,
        )


@dataclass(frozen=True)
class Finger:
    name: str
    phalanges: tuple[int, ...]  # body ids, proximal to distal
    joints: tuple[int, ...]  # indices into world.joints, one per adjacent pair
    # body-frame offset from the fingertip centre to its pad reference point
    pad_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def tip(self) -> int:
        return self.phalanges[-1]


@dataclass(frozen=True)
class HandModel:
    fingers: tuple[Finger, ...]
    couplings: tuple[PhalangeCoupling, ...]
    coupling_k: float = 100.0

    @property
    def fingertip_ids(self) -> tuple[int, ...]:
        return tuple(f.tip for f in self.fingers)

    @property
    def body_ids(self) -> frozenset[int]:
        return frozenset(b for f in self.fingers for b in f.phalanges)

    def finger(self, name: str) -> Finger:
        for f in self.fingers:
            if f.name == name:
                return f
        raise KeyError(f"hand has no finger named {name!r}")

    def validate(self, world: WorldState) -> None:
        problems = []
        seen: dict[int, str] = {}
        for f in self.fingers:
            if len(f.joints) != len(f.phalanges) - 1:
                problems.append(f"finger {f.name}: {len(f.phalanges)} phalanges need {len(f.phalanges) - 1} joints")
                continue
            for b in f.phalanges:
                if b in seen:
                    problems.append(f"body {b} appears in fingers {seen[b]} and {f.name}")
                seen[b] = f.name
            for k, j in enumerate(f.joints):
                if not 0 <= j < len(world.joints):
                    problems.append(f"finger {f.name}: joint index {j} out of range")
                    continue
                pair = {world.joints[j].body_a, world.joints[j].body_b}
                if pair != {f.phalanges[k], f.phalanges[k + 1]}:
                    problems.append(f"finger {f.name}: joint {j} does not join phalanges {k} and {k + 1}")
            # exactly one joint per adjacent pair
            for k in range(len(f.phalanges) - 1):
                pair = {f.phalanges[k], f.phalanges[k + 1]}
                count = sum(1 for jt in world.joints if {jt.body_a, jt.body_b} == pair)
                if count != 1:
                    problems.append(f"finger {f.name}: phalanges {k},{k + 1} share {count} joints")
        coupled = [c.sim_body for c in self.couplings]
        for b in seen:
            if coupled.count(b) != 1:
                problems.append(f"body {b} needs exactly one coupling, has {coupled.count(b)}")
        if self.coupling_k < 0:
            problems.append("coupling_k must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass(frozen=True)
class FingertipContactState:
    finger: str
    penetration: float
    normal_force: float
    tangential_speed: float
    friction_state: FrictionState
    contacted_body: int | None
    approach_speed: float = 0.0


def coupling_wrench(body: RigidBody, coupling: PhalangeCoupling, target: TrackedPose) -> tuple[np.ndarray, np.ndarray]:
    """Spring-damper force and torque at the body's current state."""
    return coupling.spring(target).wrench(body)


def apply_coupling(world: WorldState, hand: HandModel, tracked_poses: dict[int, TrackedPose]) -> list[ImplicitSpring]:
    """Implicit coupling terms for :func:`hapticsim.physics.step`, one per phalange."""
    missing = [c.sim_body for c in hand.couplings if c.sim_body not in tracked_poses]
    if missing:
        raise KeyError(f"no tracked pose for phalange bodies {missing}")
    return [c.spring(tracked_poses[c.sim_body]) for c in hand.couplings]


def _outward(contact: Contact, tip: int) -> np.ndarray:
    # normal pointing from the touched body into the fingertip
    return contact.normal if contact.body_a == tip else -contact.normal


def fingertip_state(
    world: WorldState,
    hand: HandModel,
    finger: str,
    contacts: list[Contact],
    tracked: TrackedPose | None = None,
) -> FingertipContactState:
    """Pressure state of one fingertip after a step.

    ``contacts`` are the step's solved contacts. The penetration combines the
    simulated overlap with how far the tracked target sits beyond the
    simulated tip along the contact normal, so the force reflects where the
    real finger is rather than where the proxy stopped.
    """
    f = hand.finger(finger)
    tip = f.tip
    own = hand.body_ids
    tip_body = world.bodies[tip]
    best = None
    for c in contacts:
        if tip not in c.pair:
            continue
        other = c.body_b if c.body_a == tip else c.body_a
        if other in own or c.friction_state == FrictionState.SEPARATED:
            continue
        depth = c.penetration_depth
        if tracked is not None:
            lag = float((tip_body.position - tracked.position) @ _outward(c, tip))
            depth += max(0.0, lag)
        if best is None or depth > best[0]:
            best = (depth, c, other)
    if best is None:
        return FingertipContactState(finger, 0.0, 0.0, 0.0, FrictionState.SEPARATED, None)
    depth, c, other = best
    pair = c.pair
    state = world.pair_states.get(pair, c.friction_state)
    if state == FrictionState.SEPARATED:
        state = c.friction_state
    return FingertipContactState(
        finger=finger,
        penetration=depth,
        normal_force=pressure_force(hand.coupling_k, depth),
        tangential_speed=c.tangential_speed,
        friction_state=state,
        contacted_body=other,
        approach_speed=c.approach_speed,
    )


def pressure_force(k: float, penetration: float) -> float:
    return k * penetration


def pad_point(position, orientation, finger: Finger) -> np.ndarray:
    return np.asarray(position, dtype=float) + quat_to_matrix(np.asarray(orientation, dtype=float)) @ finger.pad_offset


def pinch_distance(world: WorldState, hand: HandModel, first: str = "thumb", second: str = "index") -> float:
    """Distance between two fingertips' pad reference points."""
    fa, fb = hand.finger(first), hand.finger(second)
    a, b = world.bodies[fa.tip], world.bodies[fb.tip]
    return float(np.linalg.norm(pad_point(a.position, a.orientation, fa) - pad_point(b.position, b.orientation, fb)))


def tracked_pinch_distance(hand: HandModel, poses: dict[int, TrackedPose], first="thumb", second="index") -> float:
    fa, fb = hand.finger(first), hand.finger(second)
    pa, pb = poses[fa.tip], poses[fb.tip]
    return float(np.linalg.norm(pad_point(pa.position, pa.orientation, fa) - pad_point(pb.position, pb.orientation, fb)))


def orientation_error(target: np.ndarray, current: np.ndarray) -> np.ndarray:
    return quat_to_rotvec(quat_mul(target, quat_conj(current)))


@dataclass(frozen=True)
class FingerGeometry:
    """Sphere-chain proxy of one finger (defaults: 7 mm proximal, 8 mm tip, 10 g each)."""

    radii: tuple[float, ...] = (0.007, 0.008)
    masses: tuple[float, ...] = (0.010, 0.010)
    mu_static: float = 1.0
    mu_dynamic: float = 1.0


@dataclass(frozen=True)
class CouplingGains:
    linear_stiffness: float = 100.0
    linear_damping: float | None = None  # None: critical
    angular_stiffness: float = 0.05
    angular_damping: float | None = None


def finger_offsets(geometry: FingerGeometry) -> list[float]:
    """Distance of each phalange centre behind the tip centre along the finger axis."""
    out = [0.0]
    for k in range(len(geometry.radii) - 1, 0, -1):
        out.insert(0, out[0] + geometry.radii[k] + geometry.radii[k - 1])
    return out


def phalange_targets(tip: TrackedPose, axis: np.ndarray, geometry: FingerGeometry) -> list[TrackedPose]:
    """Rigid extrapolation of the tip pose to every phalange, proximal first."""
    axis = np.asarray(axis, dtype=float)
    return [
        TrackedPose(tip.position - d * axis, tip.orientation, tip.linear_velocity, tip.angular_velocity)
        for d in finger_offsets(geometry)
    ]


def build_finger(
    name: str,
    first_id: int,
    first_joint: int,
    tip_position,
    axis,
    geometry: FingerGeometry = FingerGeometry(),
    gains: CouplingGains = CouplingGains(),
    pad_direction=None,
) -> tuple[list[RigidBody], list[BallJoint], Finger, list[PhalangeCoupling]]:
    """Bodies, joints, finger record and couplings of one sphere-chain finger.

    ``axis`` points from the knuckle towards the tip; ``pad_direction`` is the
    unit direction of the pad in the tip's frame (defaults to no offset).
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    tip = np.asarray(tip_position, dtype=float)
    bodies, joints, couplings = [], [], []
    offsets = finger_offsets(geometry)
    for k, (r, m, d) in enumerate(zip(geometry.radii, geometry.masses, offsets)):
        body = RigidBody(
            id=first_id + k,
            shape=Sphere(r),
            mass=m,
            position=tip - d * axis,
            mu_static=geometry.mu_static,
            mu_dynamic=geometry.mu_dynamic,
            name=f"{name}_{k}",
            group=HAND_GROUP,
        )
        bodies.append(body)
        inertia = 0.4 * m * r * r
        lin_c = gains.linear_damping if gains.linear_damping is not None else 2.0 * math.sqrt(gains.linear_stiffness * m)
        ang_c = (
            gains.angular_damping
            if gains.angular_damping is not None
            else 2.0 * math.sqrt(gains.angular_stiffness * inertia)
        )
        couplings.append(PhalangeCoupling(body.id, gains.linear_stiffness, lin_c, gains.angular_stiffness, ang_c))
    for k in range(len(bodies) - 1):
        gap = offsets[k] - offsets[k + 1]
        joints.append(BallJoint(first_id + k, first_id + k + 1, 0.5 * gap * axis, -0.5 * gap * axis))
    pad = np.zeros(3) if pad_direction is None else geometry.radii[-1] * np.asarray(pad_direction, dtype=float)
    finger = Finger(
        name=name,
        phalanges=tuple(b.id for b in bodies),
        joints=tuple(range(first_joint, first_joint + len(joints))),
        pad_offset=pad,
    )
    return bodies, joints, finger, couplings
