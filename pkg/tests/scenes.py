"""Small worlds shared by several test modules."""

from __future__ import annotations

import math

import numpy as np

from hapticsim.physics import Box, Contact, HalfSpace, RigidBody, Sphere, WorldState
from hapticsim.physics.math3d import quat_from_axis_angle, quat_from_rotvec

G = 9.81


def ground(mu_s=0.5, mu_d=0.5) -> RigidBody:
    return RigidBody(0, HalfSpace(), is_static=True, mu_static=mu_s, mu_dynamic=mu_d, name="ground")


def resting_block(mu_s=0.15, mu_d=0.1, mass=0.3, half=0.025) -> WorldState:
    box = RigidBody(1, Box((half, half, half)), mass=mass, position=[0, 0, half], mu_static=mu_s, mu_dynamic=mu_d)
    return WorldState([ground(mu_s, mu_d), box])


def ramp_rate(mu_s=0.15, mass=0.3, crossing=1.365) -> float:
    """Force growth rate (N/s) whose Coulomb crossing falls at ``crossing`` seconds."""
    return mu_s * mass * G / crossing


def stacks(n_stacks=5, height=2, half=0.05) -> WorldState:
    """Columns of equal boxes resting on the ground: 4 contacts per interface."""
    bodies = [RigidBody(0, HalfSpace(), is_static=True)]
    for i in range(n_stacks):
        for j in range(height):
            bodies.append(
                RigidBody(len(bodies), Box((half, half, half)), mass=1.0, position=[6 * half * i, 0, half + 2 * half * j])
            )
    return WorldState(bodies)


def lcp_instance(rng):
    """One box against static geometry with 1-3 random contacts, plus the contacts."""
    m = rng.uniform(0.1, 2)
    half = rng.uniform(0.02, 0.2, 3)
    q = quat_from_rotvec(rng.normal(size=3))
    body = RigidBody(
        1,
        Box(tuple(half)),
        mass=m,
        orientation=q,
        position=rng.normal(size=3) * 0.1,
        linear_velocity=rng.normal(size=3) * 0.5,
        angular_velocity=rng.normal(size=3),
        mu_static=rng.uniform(0.1, 1.0),
        mu_dynamic=0.05,
    )
    world = WorldState([RigidBody(0, HalfSpace(), is_static=True, mu_static=2, mu_dynamic=2), body])
    contacts = []
    for k in range(int(rng.integers(1, 4))):
        n = rng.normal(size=3)
        n[2] = abs(n[2]) + 0.5
        n /= np.linalg.norm(n)
        p = body.position + body.rotation @ (half * rng.uniform(-1, 1, 3))
        gap = float(rng.choice([0.0, 0.0, rng.uniform(0, 0.01)]))
        contacts.append(Contact(1, 0, p, n, penetration_depth=0.0, gap=gap, feature=k))
    return world, body, contacts


def random_drop(rng, n_bodies=6) -> WorldState:
    """Boxes and spheres dropped from random poses onto the ground."""
    bodies = [ground(0.5, 0.4)]
    for k in range(n_bodies):
        pos = [rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.1, 0.6)]
        q = quat_from_rotvec(rng.normal(size=3))
        vel = rng.normal(size=3) * 0.3
        if k % 2:
            shape = Sphere(float(rng.uniform(0.02, 0.05)))
        else:
            shape = Box(tuple(rng.uniform(0.02, 0.05, 3)))
        bodies.append(
            RigidBody(
                k + 1,
                shape,
                mass=float(rng.uniform(0.1, 1.0)),
                position=pos,
                orientation=q,
                linear_velocity=vel,
                angular_velocity=rng.normal(size=3),
                mu_static=0.5,
                mu_dynamic=0.4,
            )
        )
    return WorldState(bodies)


def wall_block(mu_s=0.15, mu_d=0.1, mass=0.3, half=0.025):
    """Block pressed against a vertical static wall (normal +x), no floor."""
    wall = RigidBody(
        0,
        HalfSpace(),
        is_static=True,
        orientation=quat_from_axis_angle([0, 1, 0], math.pi / 2),
        mu_static=mu_s,
        mu_dynamic=mu_d,
    )
    box = RigidBody(1, Box((half, half, half)), mass=mass, position=[half, 0, 1.0], mu_static=mu_s, mu_dynamic=mu_d)
    return WorldState([wall, box])
