"""Fixed-step integration: implicit coupling springs, one LCP velocity solve, split-impulse drift correction."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bodies import Contact, ContactImpulse, FrictionEvent, FrictionState, SimulationError, WorldState
from .collision import detect_contacts
from .math3d import cross, integrate_orientation, quat_mul, quat_conj, quat_to_rotvec
from .solver import (
    NORMAL,
    assemble,
    body_velocities,
    classify_friction,
    classify_pair,
    impulses_from,
    solve_problem,
)


@dataclass(frozen=True)
class ImplicitSpring:
    """Spring-damper pulling one body towards a moving target pose.

    Folded into the velocity solve: the spring force is evaluated at the end
    of the step, which adds ``dt*c + dt**2*k`` to the body's effective mass.
    """

    body: int
    target_position: np.ndarray
    target_velocity: np.ndarray
    stiffness: float
    damping: float
    target_orientation: np.ndarray | None = None
    target_angular_velocity: np.ndarray | None = None
    angular_stiffness: float = 0.0
    angular_damping: float = 0.0

    def wrench(self, body) -> tuple[np.ndarray, np.ndarray]:
        """Explicitly evaluated force and torque at the body's current state."""
        force = self.stiffness * (self.target_position - body.position) + self.damping * (
            self.target_velocity - body.linear_velocity
        )
        torque = np.zeros(3)
        if self.target_orientation is not None:
            err = quat_to_rotvec(quat_mul(self.target_orientation, quat_conj(body.orientation)))
            w_t = np.zeros(3) if self.target_angular_velocity is None else self.target_angular_velocity
            torque = self.angular_stiffness * err + self.angular_damping * (w_t - body.angular_velocity)
        return force, torque


@dataclass
class StepDiagnostics:
    solver_residual: float
    solver_sweeps: int
    polished: bool
    contact_count: int
    friction_events: list[FrictionEvent]
    wall_time: float
    contacts: list[Contact] = field(default_factory=list)
    impulses: list[ContactImpulse] = field(default_factory=list)
    kinetic_energy_free: float = 0.0
    kinetic_energy_solved: float = 0.0
    position_residual: float = 0.0


def _kinetic(world: WorldState, vel: np.ndarray) -> float:
    total = 0.0
    for b in world.bodies:
        if b.is_static:
            continue
        v, w = vel[b.id, :3], vel[b.id, 3:]
        total += 0.5 * b.mass * float(v @ v) + 0.5 * float(w @ b.world_inertia() @ w)
    return total


def step(
    world: WorldState,
    external_forces: dict | None = None,
    couplings=(),
    dt: float | None = None,
) -> tuple[WorldState, StepDiagnostics]:
    """Advance ``world`` by one fixed step.

    ``external_forces`` maps body id to (force, torque) held over the step;
    ``couplings`` is an iterable of :class:`ImplicitSpring`.
    """
    if dt is not None and dt != world.dt:
        raise ValueError(f"dt {dt} differs from the world's fixed step {world.dt}")
    dt = world.dt
    started = time.perf_counter()
    settings = world.settings
    bodies = world.bodies
    n = len(bodies)
    external_forces = external_forces or {}

    springs: dict[int, list[ImplicitSpring]] = {}
    for s in couplings:
        springs.setdefault(s.body, []).append(s)

    vel = body_velocities(world)
    inv_mass = np.zeros((n, 6, 6))
    free = np.zeros((n, 6))
    for b in bodies:
        if b.is_static:
            continue
        force, torque = external_forces.get(b.id, (np.zeros(3), np.zeros(3)))
        inertia = b.world_inertia()
        m_eff = b.mass
        i_eff = inertia.copy()
        lin = b.mass * b.linear_velocity + dt * (np.asarray(force, float) + b.mass * world.gravity)
        ang = inertia @ b.angular_velocity + dt * np.asarray(torque, float)
        for s in springs.get(b.id, ()):
            m_eff += dt * s.damping + dt * dt * s.stiffness
            lin = lin + dt * (
                s.stiffness * (s.target_position - b.position) + (s.damping + dt * s.stiffness) * s.target_velocity
            )
            if s.target_orientation is not None:
                i_eff += (dt * s.angular_damping + dt * dt * s.angular_stiffness) * np.eye(3)
                err = quat_to_rotvec(quat_mul(s.target_orientation, quat_conj(b.orientation)))
                w_t = np.zeros(3) if s.target_angular_velocity is None else s.target_angular_velocity
                ang = ang + dt * (s.angular_stiffness * err + (s.angular_damping + dt * s.angular_stiffness) * w_t)
        inv_i = np.linalg.inv(i_eff)
        inv_mass[b.id, :3, :3] = np.eye(3) / m_eff
        inv_mass[b.id, 3:, 3:] = inv_i
        free[b.id, :3] = lin / m_eff
        free[b.id, 3:] = inv_i @ ang

    contacts = detect_contacts(world)
    problem, tangents, mus = assemble(world, contacts, free, inv_mass, dt)
    lam0 = _warm_start(world, contacts, tangents, problem.size)
    sol = solve_problem(problem, settings, lam0)
    solved = free + sol.dv

    # drift correction: pseudo-velocities that move positions but carry no momentum
    pseudo = np.zeros((n, 6))
    pos_res = 0.0
    deep = [c for c in contacts if c.penetration_depth > settings.slop]
    if deep or world.joints:
        pos_problem, _, _ = assemble(world, deep, np.zeros((n, 6)), inv_mass, dt, mus=[0.0] * len(deep), joint_bias=True)
        for r in range(pos_problem.size):
            if pos_problem.kind[r] == NORMAL:
                c = deep[r // 3]
                pos_problem.rhs[r] = -settings.baumgarte * (c.penetration_depth - settings.slop) / dt
        pos_sol = solve_problem(pos_problem, settings)
        pseudo = pos_sol.dv
        pos_res = pos_sol.residual

    new_bodies = []
    for b in bodies:
        if b.is_static:
            new_bodies.append(b)
            continue
        v, w = solved[b.id, :3], solved[b.id, 3:]
        pos = b.position + dt * (v + pseudo[b.id, :3])
        quat = integrate_orientation(b.orientation, w + pseudo[b.id, 3:], dt)
        new_bodies.append(_with(b, position=pos, orientation=quat, linear_velocity=v, angular_velocity=w))
    for b in new_bodies:
        state = np.concatenate([b.position, b.orientation, b.linear_velocity, b.angular_velocity])
        if not np.all(np.isfinite(state)):
            raise SimulationError(f"non-finite state for body {b.name or b.id} at step {world.step_index + 1}")

    # classify with post-solve velocities, at the pre-step geometry
    post_contacts = []
    impulses = impulses_from(contacts, tangents, mus, sol.lam)
    for k, c in enumerate(contacts):
        a, bb = bodies[c.body_a], bodies[c.body_b]
        va, vb = solved[c.body_a], solved[c.body_b]
        rel = (va[:3] + cross(va[3:], c.point - a.position)) if not a.is_static else np.zeros(3)
        if not bb.is_static:
            rel = rel - (vb[:3] + cross(vb[3:], c.point - bb.position))
        post = _with(c, relative_velocity=rel, approach_speed=max(0.0, -c.normal_velocity))
        post.__dict__["friction_state"] = classify_friction(post, impulses[k], settings.slip_speed_epsilon)
        post_contacts.append(post)
        impulses[k] = _with(impulses[k], contact=post)

    new_index = world.step_index + 1
    new_time = new_index * dt
    by_pair: dict[tuple[int, int], list[int]] = {}
    for k, c in enumerate(post_contacts):
        by_pair.setdefault(c.pair, []).append(k)
    pair_states = {}
    events = []
    for pair, idx in by_pair.items():
        state = classify_pair(
            [post_contacts[k] for k in idx],
            [impulses[k] for k in idx],
            settings.slip_speed_epsilon,
            states=[post_contacts[k].friction_state for k in idx],
        )
        if state == FrictionState.SEPARATED:
            continue
        pair_states[pair] = state
        before = world.pair_states.get(pair, FrictionState.SEPARATED)
        if {before, state} == {FrictionState.STATIC, FrictionState.DYNAMIC}:
            speed = max(post_contacts[k].tangential_speed for k in idx)
            events.append(FrictionEvent(pair[0], pair[1], new_time, new_index, before, state, speed))

    warm = {}
    for k, c in enumerate(contacts):
        t1, t2 = tangents[k]
        lam = sol.lam[3 * k : 3 * k + 3]
        warm[(c.body_a, c.body_b, c.feature)] = lam[0] * c.normal + lam[1] * t1 + lam[2] * t2
    base = 3 * len(contacts)
    for j in range(len(world.joints)):
        warm[("joint", j)] = sol.lam[base + 3 * j : base + 3 * j + 3].copy()

    new_world = world.evolve(
        bodies=tuple(new_bodies), step_index=new_index, pair_states=pair_states, warm_start=warm
    )
    diag = StepDiagnostics(
        solver_residual=sol.residual,
        solver_sweeps=sol.sweeps,
        polished=sol.polished,
        contact_count=len(contacts),
        friction_events=events,
        wall_time=time.perf_counter() - started,
        contacts=post_contacts,
        impulses=impulses,
        kinetic_energy_free=_kinetic(world, free),
        kinetic_energy_solved=_kinetic(world, solved),
        position_residual=pos_res,
    )
    return new_world, diag


def _with(obj, **changes):
    """Copy of a frozen dataclass with ``changes``, skipping re-validation (hot path)."""
    new = object.__new__(type(obj))
    new.__dict__.update(obj.__dict__)
    new.__dict__.update(changes)
    # drop derived caches of the old state
    new.__dict__.pop("_rotation", None)
    new.__dict__.pop("_kin", None)
    return new


def _warm_start(world: WorldState, contacts, tangents, size) -> np.ndarray:
    lam = np.zeros(size)
    cache = world.warm_start
    if not cache:
        return lam
    for k, c in enumerate(contacts):
        p = cache.get((c.body_a, c.body_b, c.feature))
        if p is None:
            continue
        t1, t2 = tangents[k]
        lam[3 * k] = max(float(p @ c.normal), 0.0)
        lam[3 * k + 1] = float(p @ t1)
        lam[3 * k + 2] = float(p @ t2)
    base = 3 * len(contacts)
    for j in range(len(world.joints)):
        p = cache.get(("joint", j))
        if p is not None:
            lam[base + 3 * j : base + 3 * j + 3] = p
    return lam
