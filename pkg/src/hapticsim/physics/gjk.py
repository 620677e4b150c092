"""GJK distance and swept ray casting for box/sphere cores.

Spheres are treated as a point core plus a radius margin, boxes as their
full volume. All kernels are numba-compiled; shapes are passed as
``(kind, half_extents, position, rotation)``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

SPHERE = 0
BOX = 1

_MAX_ITERS = 64


@njit(cache=True)
def support(kind, half, pos, rot, d):
    if kind == SPHERE:
        return pos.copy()
    out = pos.copy()
    for i in range(3):
        # local direction component along box axis i
        li = rot[0, i] * d[0] + rot[1, i] * d[1] + rot[2, i] * d[2]
        s = half[i] if li >= 0.0 else -half[i]
        out[0] += rot[0, i] * s
        out[1] += rot[1, i] * s
        out[2] += rot[2, i] * s
    return out


@njit(cache=True)
def _closest_on_simplex(pts, n):
    """Min-norm point of conv(pts[:n]) by enumerating every sub-simplex.

    Returns (point, weights, mask) where mask flags the supporting vertices.
    """
    best = np.inf
    best_pt = np.zeros(3)
    best_w = np.zeros(4)
    best_mask = 0
    for mask in range(1, 1 << n):
        idx = np.empty(4, dtype=np.int64)
        k = 0
        for i in range(n):
            if (mask >> i) & 1:
                idx[k] = i
                k += 1
        w = np.zeros(4)
        if k == 1:
            w[idx[0]] = 1.0
        else:
            p0 = pts[idx[0]]
            m = k - 1
            g = np.empty((m, m))
            rhs = np.empty(m)
            for a in range(m):
                da = pts[idx[a + 1]] - p0
                rhs[a] = -(da[0] * p0[0] + da[1] * p0[1] + da[2] * p0[2])
                for b in range(m):
                    db = pts[idx[b + 1]] - p0
                    g[a, b] = da[0] * db[0] + da[1] * db[1] + da[2] * db[2]
            scale = 0.0
            for a in range(m):
                scale = max(scale, g[a, a])
            if scale <= 0.0:
                continue
            det = np.linalg.det(g)
            if abs(det) <= 1e-14 * scale**m:
                continue
            mu = np.linalg.solve(g, rhs)
            w0 = 1.0
            ok = True
            for a in range(m):
                if mu[a] <= 0.0:
                    ok = False
                w0 -= mu[a]
                w[idx[a + 1]] = mu[a]
            if not ok or w0 <= 0.0:
                continue
            w[idx[0]] = w0
        pt = np.zeros(3)
        for i in range(n):
            pt += w[i] * pts[i]
        d2 = pt[0] * pt[0] + pt[1] * pt[1] + pt[2] * pt[2]
        if d2 < best:
            best = d2
            best_pt = pt
            best_w = w
            best_mask = mask
    return best_pt, best_w, best_mask


@njit(cache=True)
def gjk_distance(kind_a, half_a, pos_a, rot_a, kind_b, half_b, pos_b, rot_b):
    """Distance between the cores of two convex shapes.

    Returns (distance, point_on_a, point_on_b, overlapping).
    """
    pts = np.zeros((4, 3))
    pa = np.zeros((4, 3))
    pb = np.zeros((4, 3))
    d = pos_b - pos_a
    if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] == 0.0:
        d = np.array([1.0, 0.0, 0.0])
    sa = support(kind_a, half_a, pos_a, rot_a, -d)
    sb = support(kind_b, half_b, pos_b, rot_b, d)
    pts[0] = sa - sb
    pa[0] = sa
    pb[0] = sb
    n = 1
    v = pts[0].copy()
    weights = np.zeros(4)
    weights[0] = 1.0
    for _ in range(_MAX_ITERS):
        vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
        if vv < 1e-24:
            return 0.0, pa[0], pb[0], True
        sa = support(kind_a, half_a, pos_a, rot_a, -v)
        sb = support(kind_b, half_b, pos_b, rot_b, v)
        w = sa - sb
        if vv - (v[0] * w[0] + v[1] * w[1] + v[2] * w[2]) <= 1e-12 * vv:
            break
        dup = False
        for i in range(n):
            if abs(pts[i, 0] - w[0]) + abs(pts[i, 1] - w[1]) + abs(pts[i, 2] - w[2]) < 1e-15:
                dup = True
        if dup:
            break
        pts[n] = w
        pa[n] = sa
        pb[n] = sb
        n += 1
        v, weights, mask = _closest_on_simplex(pts, n)
        # compact the simplex onto its supporting vertices
        k = 0
        nw = np.zeros(4)
        for i in range(n):
            if (mask >> i) & 1:
                pts[k] = pts[i]
                pa[k] = pa[i]
                pb[k] = pb[i]
                nw[k] = weights[i]
                k += 1
        n = k
        weights = nw
        if n == 4:
            return 0.0, pa[0], pb[0], True
    ca = np.zeros(3)
    cb = np.zeros(3)
    for i in range(n):
        ca += weights[i] * pa[i]
        cb += weights[i] * pb[i]
    return np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]), ca, cb, False


@njit(cache=True)
def gjk_raycast(kind_a, half_a, pos_a, rot_a, margin_a, kind_b, half_b, pos_b, rot_b, margin_b, disp, tol):
    """Sweep shape a by ``disp`` (relative to b) and find the first time of impact.

    Conservative advancement along the ray: every GJK distance query gives a
    step that cannot overshoot the surface. Returns (hit, toi, normal_b_to_a,
    point_on_a, point_on_b) with toi in [0, 1].
    """
    t = 0.0
    zero = np.zeros(3)
    for _ in range(_MAX_ITERS):
        pos = pos_a + t * disp
        dist, ca, cb, overlap = gjk_distance(kind_a, half_a, pos, rot_a, kind_b, half_b, pos_b, rot_b)
        if overlap:
            return True, t, zero, ca, cb
        sep = dist - margin_a - margin_b
        nrm = (ca - cb) / dist
        if sep <= tol:
            return True, t, nrm, ca - margin_a * nrm, cb + margin_b * nrm
        approach = -(disp[0] * nrm[0] + disp[1] * nrm[1] + disp[2] * nrm[2])
        if approach <= 1e-15:
            return False, 1.0, nrm, ca, cb
        t += sep / approach
        if t > 1.0:
            return False, 1.0, nrm, ca, cb
    return False, 1.0, zero, zero, zero


def shape_args(body, position=None):
    """Pack a body's core into GJK arguments: (kind, half_extents, position, rotation, margin)."""
    from .bodies import Box, Sphere

    pos = np.asarray(body.position if position is None else position, dtype=float)
    rot = body.rotation
    if isinstance(body.shape, Sphere):
        return SPHERE, np.zeros(3), pos, rot, float(body.shape.radius)
    if isinstance(body.shape, Box):
        return BOX, np.asarray(body.shape.half_extents, dtype=float), pos, rot, 0.0
    raise TypeError("GJK needs a bounded convex shape")


def distance(body_a, body_b) -> tuple[float, np.ndarray, np.ndarray]:
    """Signed-free surface distance between two bounded bodies (0 when overlapping).

    Returns (distance, point_on_a, point_on_b).
    """
    ka, ha, pa, ra, ma = shape_args(body_a)
    kb, hb, pb, rb, mb = shape_args(body_b)
    dist, ca, cb, overlap = gjk_distance(ka, ha, pa, ra, kb, hb, pb, rb)
    if overlap or dist <= ma + mb:
        return 0.0, ca, cb
    nrm = (ca - cb) / dist
    return dist - ma - mb, ca - ma * nrm, cb + mb * nrm
