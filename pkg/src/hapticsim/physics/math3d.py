"""Quaternion and small-vector helpers. Quaternions are stored (w, x, y, z)."""

from __future__ import annotations

import math

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / math.sqrt(float(q @ q))


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    norm = math.sqrt(float(axis @ axis))
    if norm == 0.0 or angle == 0.0:
        return IDENTITY_QUAT.copy()
    s = math.sin(0.5 * angle) / norm
    return np.array([math.cos(0.5 * angle), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_from_rotvec(rotvec: np.ndarray) -> np.ndarray:
    angle = math.sqrt(float(rotvec @ rotvec))
    if angle < 1e-300:
        return IDENTITY_QUAT.copy()
    return quat_from_axis_angle(rotvec / angle, angle)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Rotation vector of the shortest rotation represented by ``q``."""
    if q[0] < 0.0:
        q = -q
    s = math.sqrt(float(q[1:] @ q[1:]))
    if s < 1e-300:
        return np.zeros(3)
    angle = 2.0 * math.atan2(s, q[0])
    return q[1:] * (angle / s)


def integrate_orientation(q: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """Advance ``q`` by world-frame angular velocity ``omega`` over ``dt`` (exact exponential map)."""
    dq = quat_from_rotvec(omega * dt)
    return quat_normalize(quat_mul(dq, q))


def norm3(v) -> float:
    x, y, z = float(v[0]), float(v[1]), float(v[2])
    return math.sqrt(x * x + y * y + z * z)


def cross(a, b) -> np.ndarray:
    """3-vector cross product; np.cross carries heavy per-call overhead for single vectors."""
    a0, a1, a2 = float(a[0]), float(a[1]), float(a[2])
    b0, b1, b2 = float(b[0]), float(b[1]), float(b[2])
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def tangent_basis(normal: np.ndarray, hint: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangents (t1, t2) with t1 x t2 = normal.

    If ``hint`` has a usable tangential component, t1 is aligned with it.
    """
    if hint is not None:
        h = hint - (hint @ normal) * normal
        hn = math.sqrt(float(h @ h))
        if hn > 1e-9:
            t1 = h / hn
            return t1, cross(normal, t1)
    # fixed fallback: project the world axis least aligned with the normal
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(normal)))] = 1.0
    t1 = axis - (axis @ normal) * normal
    t1 /= math.sqrt(float(t1 @ t1))
    return t1, cross(normal, t1)
