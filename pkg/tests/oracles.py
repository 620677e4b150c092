"""Independent reference computations used to freeze and cross-check expected values.

Nothing here imports the code paths it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def single_body_delassus(mass, inertia_world, position, points, normals, tangents, cfm_rel=0.0):
    """Dense J, A for contacts of one dynamic body against static geometry.

    Row order per contact: normal, t1, t2.
    """
    minv = np.zeros((6, 6))
    minv[:3, :3] = np.eye(3) / mass
    minv[3:, 3:] = np.linalg.inv(inertia_world)
    rows = []
    for p, n, (t1, t2) in zip(points, normals, tangents):
        r = np.asarray(p) - np.asarray(position)
        for d in (n, t1, t2):
            d = np.asarray(d, dtype=float)
            rows.append(np.concatenate([d, np.cross(r, d)]))
    jac = np.array(rows)
    a = jac @ minv @ jac.T
    a = a + np.diag(cfm_rel * np.diag(a))
    return jac, a


def enumerate_box_friction_lcp(a, b, mus, tol=1e-9):
    """All solutions of the boxed-friction mixed LCP by active-set enumeration.

    Per contact the normal row is either inactive (its friction rows are
    zero) or active with each friction row at its lower bound, free, or at
    its upper bound. Every combination gives one linear system; solutions
    that satisfy all sign and bound conditions are returned.
    """
    nc = len(mus)
    n = 3 * nc
    per_contact = [None] + list(itertools.product((-1, 0, 1), repeat=2))
    found = []
    for combo in itertools.product(per_contact, repeat=nc):
        m = np.zeros((n, n))
        rhs = np.zeros(n)
        for k, state in enumerate(combo):
            i = 3 * k
            if state is None:
                for j in range(3):
                    m[i + j, i + j] = 1.0
                continue
            m[i] = a[i]
            rhs[i] = -b[i]
            for j, s in zip((1, 2), state):
                if s == 0:
                    m[i + j] = a[i + j]
                    rhs[i + j] = -b[i + j]
                else:
                    m[i + j, i + j] = 1.0
                    m[i + j, i] = -s * mus[k]
        if abs(np.linalg.det(m)) < 1e-300:
            continue
        lam = np.linalg.solve(m, rhs)
        w = a @ lam + b
        ok = True
        for k, state in enumerate(combo):
            i = 3 * k
            if state is None:
                ok &= w[i] >= -tol
                continue
            ok &= lam[i] >= -tol
            bound = mus[k] * lam[i]
            for j, s in zip((1, 2), state):
                if s == 0:
                    ok &= abs(lam[i + j]) <= bound + tol
                elif s > 0:
                    ok &= w[i + j] <= tol
                else:
                    ok &= w[i + j] >= -tol
        if ok:
            found.append(lam)
    return found


def distinct(solutions, tol=1e-7):
    out = []
    for s in solutions:
        if not any(np.max(np.abs(s - o)) <= tol for o in out):
            out.append(s)
    return out


def box_vertices(center, half, rot=np.eye(3)):
    signs = np.array(list(itertools.product((-1, 1), repeat=3)), dtype=float)
    return np.asarray(center) + (signs * np.asarray(half)) @ rot.T


def sampled_box_overlap_along(box_a, box_b, axis, samples=41):
    """Overlap of two axis-aligned boxes along ``axis`` by sampling face points.

    Each box is (center, half). The overlap is the largest distance that a
    sampled point of a's face lies beyond b's opposing face.
    """
    (ca, ha), (cb, hb) = box_a, box_b
    ca, ha, cb, hb = map(np.asarray, (ca, ha, cb, hb))
    k = int(np.argmax(np.abs(axis)))
    sign = np.sign(axis[k])
    # face of a facing b and face of b facing a
    face_a = ca[k] + sign * ha[k]
    face_b = cb[k] - sign * hb[k]
    others = [i for i in range(3) if i != k]
    best = -math.inf
    for u in np.linspace(-1, 1, samples):
        for v in np.linspace(-1, 1, samples):
            p = ca.copy()
            p[others[0]] += u * ha[others[0]]
            p[others[1]] += v * ha[others[1]]
            # only points whose lateral position lies over b's face count
            if abs(p[others[0]] - cb[others[0]]) > hb[others[0]] or abs(p[others[1]] - cb[others[1]]) > hb[others[1]]:
                continue
            best = max(best, sign * (face_a - face_b))
    return best


def explicit_euler_spring(mass, k, x0, dt, steps):
    """Explicit Euler on m x'' = -k x; returns the max |x| reached."""
    x, v = x0, 0.0
    peak = abs(x)
    for _ in range(steps):
        x, v = x + dt * v, v - dt * k / mass * x
        peak = max(peak, abs(x))
        if not math.isfinite(x):
            return math.inf
    return peak


def damped_oscillator(x0, mass, k, c, t):
    """Closed-form free response of m x'' + c x' + k x = 0 with x(0)=x0, x'(0)=0."""
    wn = math.sqrt(k / mass)
    zeta = c / (2.0 * math.sqrt(k * mass))
    if abs(zeta - 1.0) < 1e-12:
        return x0 * (1.0 + wn * t) * math.exp(-wn * t)
    if zeta < 1.0:
        wd = wn * math.sqrt(1.0 - zeta**2)
        return x0 * math.exp(-zeta * wn * t) * (math.cos(wd * t) + zeta * wn / wd * math.sin(wd * t))
    s = math.sqrt(zeta**2 - 1.0)
    r1, r2 = -wn * (zeta - s), -wn * (zeta + s)
    c1 = x0 * r2 / (r2 - r1)
    c2 = -x0 * r1 / (r2 - r1)
    return c1 * math.exp(r1 * t) + c2 * math.exp(r2 * t)


def collide_transient(amplitude, decay, freq_hz, tau):
    """Decaying sinusoid evaluated directly."""
    return amplitude * math.exp(-decay * tau) * math.sin(2.0 * math.pi * freq_hz * tau)
