"""Velocity-level mixed LCP for contacts, boxed friction and ball joints.

Each contact contributes a unilateral normal row and two friction rows whose
bounds are ``±mu * lambda_n``; each ball joint contributes three bilateral
rows. The system is solved with projected Gauss-Seidel (fixed sweep cap,
early exit on the residual tolerance). If the sweeps stop short of the
tolerance, an exact refinement (active-set solves, then Lemke pivoting or a
bounded least squares fixed point) polishes the result; it is kept only when
it lowers the residual. Small problems are always polished.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import lsq_linear

from .bodies import BallJoint, Contact, ContactImpulse, FrictionState, SolverSettings, WorldState
from .math3d import cross, norm3

NORMAL, FRICTION, BILATERAL = 0, 1, 2


@dataclass
class ContactProblem:
    """Assembled rows of one velocity solve (arrays indexed by row)."""

    bodies: np.ndarray  # (n, 2) body index, -1 for static / absent
    jac: np.ndarray  # (n, 2, 6)
    minv_jt: np.ndarray  # (n, 2, 6) effective inverse mass times J^T
    rhs: np.ndarray  # (n,) velocity offset: w = A lam + rhs
    kind: np.ndarray  # (n,)
    parent: np.ndarray  # (n,) normal row of a friction row, else -1
    mu: np.ndarray  # (n,)
    diag: np.ndarray  # (n,) regularised diagonal of A
    cfm: np.ndarray  # (n,) absolute diagonal regularisation
    n_bodies: int

    @property
    def size(self) -> int:
        return len(self.rhs)

    def dense(self) -> np.ndarray:
        """Regularised Delassus matrix A = J W J^T + diag(cfm)."""
        n = self.size
        jf = np.zeros((n, 6 * self.n_bodies))
        wf = np.zeros((n, 6 * self.n_bodies))
        for r in range(n):
            for k in range(2):
                b = self.bodies[r, k]
                if b >= 0:
                    jf[r, 6 * b : 6 * b + 6] += self.jac[r, k]
                    wf[r, 6 * b : 6 * b + 6] += self.minv_jt[r, k]
        return jf @ wf.T + np.diag(self.cfm)


@dataclass
class Solution:
    lam: np.ndarray
    dv: np.ndarray  # (n_bodies, 6) velocity change
    residual: float
    sweeps: int
    polished: bool


def row_jacobian(direction, point, pos_a, pos_b):
    """Jacobian blocks of the relative velocity of a at ``point`` w.r.t. b along ``direction``."""
    ja = np.concatenate([direction, cross(point - pos_a, direction)])
    jb = -np.concatenate([direction, cross(point - pos_b, direction)])
    return ja, jb


def pair_mu(world: WorldState, a: int, b: int) -> tuple[float, float]:
    ba, bb = world.bodies[a], world.bodies[b]
    return min(ba.mu_static, bb.mu_static), min(ba.mu_dynamic, bb.mu_dynamic)


def select_mu(world: WorldState, contact: Contact) -> float:
    mu_s, mu_d = pair_mu(world, contact.body_a, contact.body_b)
    if world.pair_states.get(contact.pair) == FrictionState.DYNAMIC:
        return mu_d
    return mu_s


class _Rows:
    """Row accumulator for the (few) joint rows."""

    def __init__(self):
        self.bodies, self.jac, self.minv_jt, self.rhs = [], [], [], []

    def add(self, a, b, ja, jb, inv_mass, rhs):
        self.bodies.append((a, b))
        self.jac.append((ja, jb))
        wa = inv_mass[a] @ ja if a >= 0 else np.zeros(6)
        wb = inv_mass[b] @ jb if b >= 0 else np.zeros(6)
        self.minv_jt.append((wa, wb))
        self.rhs.append(rhs)

    def arrays(self):
        n = len(self.rhs)
        return (
            np.array(self.bodies, dtype=np.int64).reshape(n, 2),
            np.array(self.jac, dtype=float).reshape(n, 2, 6),
            np.array(self.minv_jt, dtype=float).reshape(n, 2, 6),
            np.array(self.rhs, dtype=float),
        )


def _cross_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product over the last axis (broadcasting), cheaper than np.cross for small arrays."""
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def _tangents(normals: np.ndarray, rel: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised tangent_basis: t1 along the tangential relative velocity when it is usable.

    Also returns the mask of contacts whose t1 follows that velocity.
    """
    h = rel - np.einsum("ij,ij->i", rel, normals)[:, None] * normals
    hn = np.sqrt(np.einsum("ij,ij->i", h, h))
    axis = np.zeros_like(normals)
    axis[np.arange(len(normals)), np.argmin(np.abs(normals), axis=1)] = 1.0
    fb = axis - np.einsum("ij,ij->i", axis, normals)[:, None] * normals
    fb /= np.sqrt(np.einsum("ij,ij->i", fb, fb))[:, None]
    use = hn > 1e-9
    t1 = np.where(use[:, None], h / np.where(use, hn, 1.0)[:, None], fb)
    return t1, _cross_rows(normals, t1), use


def _index(body) -> int:
    return -1 if body.is_static else body.id


def assemble(
    world: WorldState,
    contacts: list[Contact],
    velocities: np.ndarray,
    inv_mass: np.ndarray,
    dt: float,
    mus: list[float] | None = None,
    joint_bias: bool = False,
):
    """Rows for ``contacts`` and the world's joints.

    ``velocities`` is (n_bodies, 6) [linear, angular] of the unconstrained
    step; ``inv_mass`` the (n_bodies, 6, 6) effective inverse masses.
    Returns (problem, tangents, mus).
    """
    bodies = world.bodies
    nb = len(bodies)
    mus = [select_mu(world, c) for c in contacts] if mus is None else list(mus)
    nc = len(contacts)
    # per contact: normal, t1, t2
    if nc:
        ia = np.array([_index(bodies[c.body_a]) for c in contacts], dtype=np.int64)
        ib = np.array([_index(bodies[c.body_b]) for c in contacts], dtype=np.int64)
        ida = np.array([c.body_a for c in contacts])
        idb = np.array([c.body_b for c in contacts])
        points = np.array([c.point for c in contacts])
        normals = np.array([c.normal for c in contacts])
        gaps = np.array([c.gap for c in contacts])
        positions = np.array([b.position for b in bodies])
        ra = points - positions[ida]
        rb = points - positions[idb]
        va, vb = velocities[ida], velocities[idb]
        rel = (va[:, :3] + _cross_rows(va[:, 3:], ra)) - (vb[:, :3] + _cross_rows(vb[:, 3:], rb))
        t1, t2, along_slip = _tangents(normals, rel)
        dirs = np.stack([normals, t1, t2], axis=1)  # (nc, 3, 3)
        ja = np.concatenate([dirs, _cross_rows(ra[:, None, :], dirs)], axis=2)
        jb = -np.concatenate([dirs, _cross_rows(rb[:, None, :], dirs)], axis=2)
        wa = np.einsum("cij,crj->cri", inv_mass[np.maximum(ia, 0)], ja) * (ia >= 0)[:, None, None]
        wb = np.einsum("cij,crj->cri", inv_mass[np.maximum(ib, 0)], jb) * (ib >= 0)[:, None, None]
        c_bodies = np.repeat(np.stack([ia, ib], axis=1), 3, axis=0)
        c_jac = np.stack([ja, jb], axis=2).reshape(3 * nc, 2, 6)
        c_minv = np.stack([wa, wb], axis=2).reshape(3 * nc, 2, 6)
        c_rhs = np.einsum("ci,cri->cr", rel, dirs)
        c_rhs[:, 0] += gaps / dt
        c_rhs = c_rhs.reshape(3 * nc)
        c_kind = np.tile(np.array([NORMAL, FRICTION, FRICTION], dtype=np.int64), nc)
        base = 3 * np.arange(nc, dtype=np.int64)
        c_parent = np.stack([np.full(nc, -1, dtype=np.int64), base, base], axis=1).reshape(3 * nc)
        mu_arr = np.asarray(mus, dtype=float)
        # kinetic friction acts along the slip direction only; a free t2 row
        # would let redundant contacts carry internal tangential squeeze
        sliding = np.array([world.pair_states.get(c.pair) == FrictionState.DYNAMIC for c in contacts]) & along_slip
        c_mu = np.stack([np.zeros(nc), mu_arr, np.where(sliding, 0.0, mu_arr)], axis=1).reshape(3 * nc)
        tangents = [(t1[k], t2[k]) for k in range(nc)]
    else:
        c_bodies = np.zeros((0, 2), dtype=np.int64)
        c_jac = c_minv = np.zeros((0, 2, 6))
        c_rhs = c_mu = np.zeros(0)
        c_kind = c_parent = np.zeros(0, dtype=np.int64)
        tangents = []

    rows = _Rows()
    for joint in world.joints:
        _joint_rows(rows, world, joint, velocities, inv_mass, dt, joint_bias)
    j_bodies, j_jac, j_minv, j_rhs = rows.arrays()
    nj = len(j_rhs)

    jac = np.concatenate([c_jac, j_jac])
    minv_jt = np.concatenate([c_minv, j_minv])
    diag = np.einsum("rkj,rkj->r", jac, minv_jt)
    cfm = world.settings.cfm * diag
    problem = ContactProblem(
        bodies=np.concatenate([c_bodies, j_bodies]),
        jac=jac,
        minv_jt=minv_jt,
        rhs=np.concatenate([c_rhs, j_rhs]),
        kind=np.concatenate([c_kind, np.full(nj, BILATERAL, dtype=np.int64)]),
        parent=np.concatenate([c_parent, np.full(nj, -1, dtype=np.int64)]),
        mu=np.concatenate([c_mu, np.zeros(nj)]),
        diag=diag + cfm,
        cfm=cfm,
        n_bodies=nb,
    )
    return problem, tangents, mus


def _joint_rows(rows, world, joint: BallJoint, velocities, inv_mass, dt, bias):
    a, b = world.bodies[joint.body_a], world.bodies[joint.body_b]
    pa, pb = joint.world_anchors(world.bodies)
    err = pa - pb
    va, vb = velocities[joint.body_a], velocities[joint.body_b]
    rel = (va[:3] + cross(va[3:], pa - a.position)) - (vb[:3] + cross(vb[3:], pb - b.position))
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        ja = np.concatenate([e, cross(pa - a.position, e)])
        jb = -np.concatenate([e, cross(pb - b.position, e)])
        rhs = float(rel[k])
        if bias:
            rhs = world.settings.joint_baumgarte * float(err[k]) / dt
        rows.add(_index(a), _index(b), ja, jb, inv_mass, rhs)


@njit(cache=True)
def _pgs_kernel(bodies, jac, minv_jt, rhs, kind, parent, mu, diag, cfm, lam, dv, iters, tol):
    n = rhs.shape[0]
    sweeps = 0
    res = 0.0
    for it in range(iters):
        sweeps = it + 1
        for r in range(n):
            a = bodies[r, 0]
            b = bodies[r, 1]
            w = rhs[r] + cfm[r] * lam[r]
            if a >= 0:
                for k in range(6):
                    w += jac[r, 0, k] * dv[a, k]
            if b >= 0:
                for k in range(6):
                    w += jac[r, 1, k] * dv[b, k]
            new = lam[r] - w / diag[r]
            if kind[r] == 0:
                if new < 0.0:
                    new = 0.0
            elif kind[r] == 1:
                bound = mu[r] * lam[parent[r]]
                if new > bound:
                    new = bound
                elif new < -bound:
                    new = -bound
            d = new - lam[r]
            if d != 0.0:
                lam[r] = new
                if a >= 0:
                    for k in range(6):
                        dv[a, k] += minv_jt[r, 0, k] * d
                if b >= 0:
                    for k in range(6):
                        dv[b, k] += minv_jt[r, 1, k] * d
        res = _residual_kernel(bodies, jac, rhs, kind, parent, mu, cfm, lam, dv)
        if res <= tol:
            break
    return sweeps, res


@njit(cache=True)
def _residual_kernel(bodies, jac, rhs, kind, parent, mu, cfm, lam, dv):
    n = rhs.shape[0]
    res = 0.0
    for r in range(n):
        a = bodies[r, 0]
        b = bodies[r, 1]
        w = rhs[r] + cfm[r] * lam[r]
        if a >= 0:
            for k in range(6):
                w += jac[r, 0, k] * dv[a, k]
        if b >= 0:
            for k in range(6):
                w += jac[r, 1, k] * dv[b, k]
        x = lam[r] - w
        if kind[r] == 0:
            if x < 0.0:
                x = 0.0
        elif kind[r] == 1:
            bound = mu[r] * lam[parent[r]]
            if bound < 0.0:
                bound = 0.0
            if x > bound:
                x = bound
            elif x < -bound:
                x = -bound
        e = abs(lam[r] - x)
        if e > res:
            res = e
    return res


_ALWAYS_POLISH_ROWS = 24
# polish target: exact solves land near 1e-16, and anything looser admits a
# whole near-null direction of impulses when A is ill conditioned
_EXACT = 1e-12
_PIVOT_ROWS = 96


def _project(problem: ContactProblem, lam: np.ndarray) -> np.ndarray:
    """Clamp round-off out of the feasible set (exact solves can give -1e-18)."""
    out = lam.copy()
    normal = problem.kind == NORMAL
    out[normal] = np.maximum(out[normal], 0.0)
    fric = np.flatnonzero(problem.kind == FRICTION)
    bound = problem.mu[fric] * out[problem.parent[fric]]
    out[fric] = np.clip(out[fric], -bound, bound)
    return out


def natural_residual(problem: ContactProblem, lam: np.ndarray, w: np.ndarray) -> float:
    """Max-norm of lam - proj(lam - w) with the rows' (lambda-dependent) bounds."""
    if problem.size == 0:
        return 0.0
    x = lam - w
    lo = np.full(problem.size, -np.inf)
    hi = np.full(problem.size, np.inf)
    normal = problem.kind == NORMAL
    fric = problem.kind == FRICTION
    lo[normal] = 0.0
    bound = np.maximum(problem.mu[fric] * lam[problem.parent[fric]], 0.0)
    lo[fric], hi[fric] = -bound, bound
    return float(np.max(np.abs(lam - np.clip(x, lo, hi))))


def _velocity_change(problem: ContactProblem, lam: np.ndarray) -> np.ndarray:
    dv = np.zeros((problem.n_bodies, 6))
    for k in range(2):
        idx = problem.bodies[:, k]
        mask = idx >= 0
        np.add.at(dv, idx[mask], problem.minv_jt[mask, k] * lam[mask, None])
    return dv


# row classes of an active-set guess
_FREE, _ZERO, _HI, _LO = 0, 1, 2, 3


def _classify_rows(problem: ContactProblem, lam: np.ndarray, w: np.ndarray) -> np.ndarray:
    x = lam - w
    kind, parent = problem.kind, problem.parent
    codes = np.full(problem.size, _FREE)
    normal = kind == NORMAL
    codes[normal & (x <= 0.0)] = _ZERO
    fric = np.flatnonzero(kind == FRICTION)
    bound = problem.mu[fric] * np.maximum(lam[parent[fric]], 0.0)
    codes[fric[x[fric] >= bound]] = _HI
    codes[fric[x[fric] <= -bound]] = _LO
    codes[fric[codes[parent[fric]] == _ZERO]] = _ZERO
    return codes


def _solve_classified(problem: ContactProblem, dense: np.ndarray, codes: np.ndarray) -> np.ndarray | None:
    """Impulses satisfying the equalities implied by ``codes`` (free rows: w = 0)."""
    n = problem.size
    m = np.zeros((n, n))
    r = np.zeros(n)
    free = codes == _FREE
    m[free] = dense[free]
    r[free] = -problem.rhs[free]
    rows = np.flatnonzero(~free)
    m[rows, rows] = 1.0
    hi = np.flatnonzero(codes == _HI)
    lo = np.flatnonzero(codes == _LO)
    m[hi, problem.parent[hi]] = -problem.mu[hi]
    m[lo, problem.parent[lo]] = problem.mu[lo]
    try:
        out = np.linalg.solve(m, r)
    except np.linalg.LinAlgError:
        out = np.linalg.lstsq(m, r, rcond=None)[0]
    return out if np.all(np.isfinite(out)) else None


def _fixed_bound_qp(problem: ContactProblem, dense: np.ndarray, lam: np.ndarray, tol: float, outer: int = 30):
    """Freeze the friction bounds at ``lam``, solve the box-constrained QP exactly, repeat.

    With the bounds fixed, min 0.5 x'Ax + rhs'x over the box is strictly
    convex (A carries the CFM diagonal), so bounded-variable least squares on
    the Cholesky factor solves it exactly. A fixed point of the bound update
    is a solution of the coupled problem. Returns (lam, residual).
    """
    n = problem.size
    kind = problem.kind
    fric = np.flatnonzero(kind == FRICTION)
    best, best_res = lam, natural_residual(problem, lam, dense @ lam + problem.rhs)
    current = lam
    for _ in range(outer):
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        lo[kind == NORMAL] = 0.0
        bound = problem.mu[fric] * np.maximum(current[problem.parent[fric]], 0.0)
        lo[fric], hi[fric] = -bound, bound
        free = hi > lo
        new = np.zeros(n)
        if free.any():
            sub = dense[np.ix_(free, free)]
            try:
                chol = np.linalg.cholesky(0.5 * (sub + sub.T))
            except np.linalg.LinAlgError:
                break
            target = -np.linalg.solve(chol, problem.rhs[free])
            fit = lsq_linear(chol.T, target, bounds=(lo[free], hi[free]), method="bvls", tol=1e-14)
            new[free] = fit.x
        res = natural_residual(problem, new, dense @ new + problem.rhs)
        if res < best_res:
            best, best_res = new, res
        if res <= tol or np.array_equal(new, current):
            break
        current = new
    return best, best_res


def _lemke(m: np.ndarray, q: np.ndarray, max_pivots: int = 2000, eps: float = 1e-12) -> np.ndarray | None:
    """Lemke's complementary pivoting for w = Mz + q >= 0, z >= 0, z'w = 0 (None on a ray)."""
    n = len(q)
    if np.all(q >= 0.0):
        return np.zeros(n)
    tab = np.hstack([np.eye(n), -m, -np.ones((n, 1)), q[:, None]])
    basis = list(range(n))
    z0 = 2 * n

    def pivot(r, e):
        tab[r] /= tab[r, e]
        col = tab[:, e].copy()
        col[r] = 0.0
        tab[:] -= np.outer(col, tab[r])

    r = int(np.argmin(q))
    leaving = basis[r]
    pivot(r, z0)
    basis[r] = z0
    for _ in range(max_pivots):
        e = leaving + n if leaving < n else leaving - n
        col, rhs = tab[:, e], tab[:, -1]
        rows = np.flatnonzero(col > eps)
        if rows.size == 0:
            return None
        ratios = rhs[rows] / col[rows]
        low = ratios.min()
        ties = rows[ratios <= low + 1e-12 * max(1.0, abs(low))]
        # prefer letting the artificial variable leave: that ends the path
        r = next((i for i in ties if basis[i] == z0), int(ties[0]))
        leaving = basis[r]
        pivot(r, e)
        basis[r] = e
        if leaving == z0:
            z = np.zeros(2 * n + 1)
            z[basis] = tab[:, -1]
            return z[n : 2 * n]
    return None


def _lemke_solve(problem: ContactProblem, dense: np.ndarray) -> np.ndarray | None:
    """The mixed problem as a standard LCP, solved by ``_lemke``.

    Normal impulses map to themselves. A friction impulse is split as
    b+ - b- with a slack s per row: (w + s) _|_ b+, (s - w) _|_ b- and
    (mu * lambda_n - b+ - b-) _|_ s. A bilateral impulse is u+ - u- with
    w _|_ u+ and -w _|_ u-, which forces w = 0.
    """
    kind, parent, mu, rhs = problem.kind, problem.parent, problem.mu, problem.rhs
    normal = np.flatnonzero(kind == NORMAL)
    split = np.flatnonzero(kind != NORMAL)
    fric = np.flatnonzero(kind == FRICTION)
    nn, ns, nf = len(normal), len(split), len(fric)
    size = nn + 2 * ns + nf
    # impulses = lift @ z
    lift = np.zeros((problem.size, size))
    lift[normal, np.arange(nn)] = 1.0
    lift[split, nn + np.arange(ns)] = 1.0
    lift[split, nn + ns + np.arange(ns)] = -1.0
    g = dense @ lift
    m = np.zeros((size, size))
    q = np.zeros(size)
    plus, minus = nn + np.arange(ns), nn + ns + np.arange(ns)
    m[:nn], q[:nn] = g[normal], rhs[normal]
    m[plus], q[plus] = g[split], rhs[split]
    m[minus], q[minus] = -g[split], -rhs[split]
    slot = {row: k for k, row in enumerate(normal)}
    where = {row: k for k, row in enumerate(split)}
    for k, row in enumerate(fric):
        s = nn + 2 * ns + k
        j = where[row]
        m[plus[j], s] = 1.0
        m[minus[j], s] = 1.0
        m[s, slot[parent[row]]] = mu[row]
        m[s, plus[j]] = -1.0
        m[s, minus[j]] = -1.0
    z = _lemke(m, q)
    if z is None or not np.all(np.isfinite(z)):
        return None
    return lift @ z


def _polish(problem: ContactProblem, lam: np.ndarray, dense: np.ndarray, tol: float = 0.0, rounds: int = 20):
    """Exact refinement of ``lam``; returns (lam, max-norm residual).

    Stages, each tried only while the tolerance is missed:

    1. plain active-set iteration: classify the rows at the iterate, solve the
       matching linear system exactly, repeat (keeping the best iterate);
    2. Lemke's pivoting on the problem's standard LCP form, for problems up
       to ``_PIVOT_ROWS`` rows;
    3. the bound fixed point of ``_fixed_bound_qp``.

    Exact solves are preferred over merely small residuals because a
    near-singular A lets a whole region of impulses pass the velocity
    tolerance.
    """

    def residual(v):
        return natural_residual(problem, v, dense @ v + problem.rhs)

    best, best_res = lam, residual(lam)
    current = lam
    for _ in range(rounds):
        full = _solve_classified(problem, dense, _classify_rows(problem, current, dense @ current + problem.rhs))
        if full is None:
            break
        res = residual(full)
        if res <= tol:
            return full, res
        if res < best_res:
            best, best_res = full, res
        if np.array_equal(full, current):
            break
        current = full

    if problem.size <= _PIVOT_ROWS:
        cand = _lemke_solve(problem, dense)
        if cand is not None:
            res = residual(cand)
            if res <= tol:
                return cand, res
            if res < best_res:
                best, best_res = cand, res

    cand, res = _fixed_bound_qp(problem, dense, best, tol)
    if res < best_res:
        best, best_res = cand, res
    return best, best_res


def solve_problem(problem: ContactProblem, settings: SolverSettings, lam0: np.ndarray | None = None) -> Solution:
    n = problem.size
    if n == 0:
        return Solution(np.zeros(0), np.zeros((problem.n_bodies, 6)), 0.0, 0, False)
    lam = np.zeros(n) if lam0 is None else np.array(lam0, dtype=float)
    dv = _velocity_change(problem, lam)
    sweeps, res = _pgs_kernel(
        problem.bodies,
        problem.jac,
        problem.minv_jt,
        problem.rhs,
        problem.kind,
        problem.parent,
        problem.mu,
        problem.diag,
        problem.cfm,
        lam,
        dv,
        settings.iterations,
        settings.tolerance,
    )
    polished = False
    # small problems are always polished: a velocity residual under tolerance can
    # still hide a large impulse error when the Delassus matrix is near singular
    if res > settings.tolerance or n <= _ALWAYS_POLISH_ROWS:
        new_lam, new_res = _polish(problem, lam, problem.dense(), min(settings.tolerance, _EXACT))
        if new_res < res:
            lam, res, polished = _project(problem, new_lam), new_res, True
            dv = _velocity_change(problem, lam)
    return Solution(lam, dv, res, sweeps, polished)


def classify_friction(
    contact: Contact, impulse: ContactImpulse, slip_speed_epsilon: float = 1e-4
) -> FrictionState:
    """Friction state of one solved contact.

    ``contact.relative_velocity`` must hold the post-solve relative velocity.
    """
    touching = impulse.normal_impulse > 0.0 or contact.penetration_depth > 0.0
    if not touching:
        return FrictionState.SEPARATED
    if contact.tangential_speed >= slip_speed_epsilon:
        return FrictionState.DYNAMIC
    limit = impulse.mu * impulse.normal_impulse
    if impulse.normal_impulse > 0.0 and impulse.tangential_magnitude >= limit * (1.0 - 1e-9):
        return FrictionState.DYNAMIC
    return FrictionState.STATIC


def classify_pair(contacts, impulses, slip_speed_epsilon: float = 1e-4, states=None) -> FrictionState:
    """Aggregate state of all contacts between one body pair.

    Dynamic when any touching point slips or the pair's summed friction
    impulse sits on the summed cone limit.
    """
    if states is None:
        states = [classify_friction(c, i, slip_speed_epsilon) for c, i in zip(contacts, impulses)]
    touching = [s != FrictionState.SEPARATED for s in states]
    if not any(touching):
        return FrictionState.SEPARATED
    if any(c.tangential_speed >= slip_speed_epsilon for c, t in zip(contacts, touching) if t):
        return FrictionState.DYNAMIC
    total_n = sum(i.normal_impulse for i in impulses)
    total_t = np.sum([i.tangential_vector for i in impulses], axis=0)
    limit = sum(i.mu * i.normal_impulse for i in impulses)
    if total_n > 0.0 and norm3(total_t) >= limit * (1.0 - 1e-9):
        return FrictionState.DYNAMIC
    return FrictionState.STATIC


def body_velocities(world: WorldState) -> np.ndarray:
    return np.array([np.concatenate([b.linear_velocity, b.angular_velocity]) for b in world.bodies])


def inverse_masses(world: WorldState) -> np.ndarray:
    out = np.zeros((len(world.bodies), 6, 6))
    for b in world.bodies:
        if not b.is_static:
            out[b.id, :3, :3] = np.eye(3) / b.mass
            out[b.id, 3:, 3:] = b.world_inv_inertia()
    return out


def impulses_from(contacts, tangents, mus, lam) -> list[ContactImpulse]:
    out = []
    for k, (c, t, mu) in enumerate(zip(contacts, tangents, mus)):
        out.append(
            ContactImpulse(
                contact=c,
                normal_impulse=float(lam[3 * k]),
                tangential_impulse=np.array([lam[3 * k + 1], lam[3 * k + 2]]),
                tangents=t,
                mu=mu,
            )
        )
    return out


def solve_contacts(world: WorldState, contacts: list[Contact], dt: float | None = None) -> list[ContactImpulse]:
    """Impulses for ``contacts`` after one step of gravity, without couplings or joints' drift bias."""
    dt = world.dt if dt is None else dt
    if not dt > 0:
        raise ValueError("dt must be positive")
    vel = body_velocities(world)
    for b in world.bodies:
        if not b.is_static:
            vel[b.id, :3] += dt * world.gravity
    inv_mass = inverse_masses(world)
    problem, tangents, mus = assemble(world, contacts, vel, inv_mass, dt)
    sol = solve_problem(problem, world.settings)
    return impulses_from(contacts, tangents, mus, sol.lam)
