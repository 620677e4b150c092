"""Contact generation for spheres, boxes and static half-spaces.

Overlapping and near-touching pairs get analytic or clipped-face manifolds;
pairs that are apart but close the gap within one step (judged by a GJK ray
cast over the step's relative displacement) get a speculative contact so fast
bodies cannot tunnel.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .math3d import cross, norm3

from . import gjk
from .bodies import Box, Contact, HalfSpace, RigidBody, Sphere, WorldState

MAX_MANIFOLD = 4

# box vertex signs, fixed order so vertex indices double as feature ids
_CORNERS = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)


def detect_contacts(world: WorldState) -> list[Contact]:
    """All contacts of the world, sorted by (body_a, body_b, point)."""
    margin = world.settings.contact_margin
    dt = world.dt
    bodies = world.bodies
    bounds = [_bounds(b, dt) for b in bodies]
    contacts: list[Contact] = []
    for a, b in combinations(bodies, 2):
        if a.is_static and b.is_static:
            continue
        if a.group and a.group == b.group:
            continue
        # dynamic body first; otherwise lower id first
        if a.is_static:
            a, b = b, a
        if not _broadphase(bounds[a.id], bounds[b.id], margin, dt):
            continue
        contacts.extend(_collide(a, b, margin, dt))
    contacts.sort(key=Contact.sort_key)
    return contacts


def _bounds(body: RigidBody, dt: float):
    """(position, velocity, radius, rotational sweep, plane normal) as plain floats."""
    if isinstance(body.shape, HalfSpace):
        return body.position.tolist(), body.linear_velocity.tolist(), 0.0, 0.0, body.rotation[:, 2].tolist()
    radius = body.shape.bounding_radius()
    spin = norm3(body.angular_velocity) * radius * dt
    return body.position.tolist(), body.linear_velocity.tolist(), radius, spin, None


def _broadphase(a, b, margin: float, dt: float) -> bool:
    pa, va, ra, spin_a, _ = a
    pb, vb, rb, spin_b, normal = b
    sweep = math.sqrt(sum((x - y) ** 2 for x, y in zip(va, vb))) * dt + spin_a + spin_b
    reach = ra + margin + sweep
    if normal is not None:
        return sum(n * (x - y) for n, x, y in zip(normal, pa, pb)) <= reach
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(pa, pb))) <= reach + rb


def _make(a, b, point, normal, depth, feature) -> Contact:
    """Contact from signed depth (positive overlap, negative gap)."""
    rel = a.point_velocity(point) - b.point_velocity(point)
    return Contact(
        body_a=a.id,
        body_b=b.id,
        point=np.asarray(point, dtype=float),
        normal=np.asarray(normal, dtype=float),
        penetration_depth=max(depth, 0.0),
        gap=max(-depth, 0.0),
        relative_velocity=rel,
        feature=feature,
    )


def _approach(a, b, point, normal, dt) -> float:
    """Distance the pair closes along ``normal`` during one step at current velocities."""
    rel = a.point_velocity(point) - b.point_velocity(point)
    return max(0.0, -float(rel @ normal) * dt)


def _collide(a: RigidBody, b: RigidBody, margin: float, dt: float) -> list[Contact]:
    sa, sb = a.shape, b.shape
    if isinstance(sb, HalfSpace):
        if isinstance(sa, Sphere):
            return _sphere_plane(a, b, margin, dt)
        return _box_plane(a, b, margin, dt)
    if isinstance(sa, Sphere) and isinstance(sb, Sphere):
        found = _sphere_sphere(a, b, margin)
    elif isinstance(sa, Sphere) and isinstance(sb, Box):
        found = _sphere_box(a, b, margin)
    elif isinstance(sa, Box) and isinstance(sb, Sphere):
        found = _flip(_sphere_box(b, a, margin), a, b)
    else:
        found = _box_box(a, b, margin)
    if found:
        return found
    return _swept(a, b, dt)


def _flip(contacts, a, b):
    out = []
    for c in contacts:
        out.append(_make(a, b, c.point, -c.normal, c.penetration_depth - c.gap, c.feature))
    return out


def _sphere_plane(a, b, margin, dt):
    n = b.rotation[:, 2]
    r = a.shape.radius
    height = float(n @ (a.position - b.position)) - r
    point = a.position - (r + 0.5 * height) * n
    if height > margin + _approach(a, b, point, n, dt):
        return []
    return [_make(a, b, point, n, -height, 0)]


def _box_plane(a, b, margin, dt):
    n = b.rotation[:, 2]
    half = np.asarray(a.shape.half_extents)
    verts = a.position + (_CORNERS * half) @ a.rotation.T
    heights = (verts - b.position) @ n
    found = []
    for i in np.lexsort((np.arange(8), heights)):
        h = float(heights[i])
        point = verts[i] - 0.5 * h * n
        if h > margin + _approach(a, b, verts[i], n, dt):
            continue
        found.append(_make(a, b, point, n, -h, int(i)))
        if len(found) == MAX_MANIFOLD:
            break
    return found


def _sphere_sphere(a, b, margin):
    d = a.position - b.position
    dist = norm3(d)
    ra, rb = a.shape.radius, b.shape.radius
    sep = dist - ra - rb
    if sep > margin:
        return []
    n = d / dist if dist > 1e-12 else np.array([0.0, 0.0, 1.0])
    point = b.position + (rb + 0.5 * sep) * n
    return [_make(a, b, point, n, -sep, 0)]


def _sphere_box(a, b, margin):
    """Sphere a against box b; normal points from the box to the sphere."""
    rot = b.rotation
    half = np.asarray(b.shape.half_extents)
    local = rot.T @ (a.position - b.position)
    r = a.shape.radius
    clamped = np.clip(local, -half, half)
    diff = local - clamped
    dist = norm3(diff)
    if dist > 1e-12:
        sep = dist - r
        if sep > margin:
            return []
        n_local = diff / dist
        surface = clamped
    else:
        # centre inside the box: push out through the nearest face
        face_gap = half - np.abs(local)
        axis = int(np.argmin(face_gap))
        n_local = np.zeros(3)
        n_local[axis] = 1.0 if local[axis] >= 0 else -1.0
        sep = -(face_gap[axis] + r)
        surface = local.copy()
        surface[axis] = n_local[axis] * half[axis]
    n = rot @ n_local
    point = b.position + rot @ surface + 0.5 * sep * n
    return [_make(a, b, point, n, -sep, 0)]


_YZX = [1, 2, 0]
_ZXY = [2, 0, 1]


def _box_axes(body):
    return body.rotation.T  # rows are world-frame box axes


def _box_box(a, b, margin):
    ra, rb = _box_axes(a), _box_axes(b)
    ha, hb = np.asarray(a.shape.half_extents), np.asarray(b.shape.half_extents)
    d = a.position - b.position

    # separating axes: 3 face normals of each box, then the non-degenerate edge crosses
    edges = (ra[:, None, _YZX] * rb[None, :, _ZXY] - ra[:, None, _ZXY] * rb[None, :, _YZX]).reshape(9, 3)
    norms = np.sqrt(np.einsum("ij,ij->i", edges, edges))
    keep = norms > 1e-6
    axes = np.concatenate([ra, rb, edges[keep] / norms[keep, None]])
    tags = [("a", i) for i in range(3)] + [("b", i) for i in range(3)]
    tags += [("e", i, j) for k, (i, j) in enumerate((i, j) for i in range(3) for j in range(3)) if keep[k]]
    dist = axes @ d
    overlaps = np.abs(axes @ ra.T) @ ha + np.abs(axes @ rb.T) @ hb - np.abs(dist)
    if np.any(overlaps < -margin):
        return []

    def pick(k):
        axis = axes[k] if dist[k] >= 0 else -axes[k]
        return float(overlaps[k]), axis, tags[k]

    best = pick(int(np.argmin(overlaps)))
    face_best = pick(int(np.argmin(overlaps[:6])))
    # prefer face contacts unless an edge axis is clearly shallower
    if best[2][0] == "e" and face_best[0] <= best[0] + 1e-4:
        best = face_best
    overlap, normal, tag = best
    if tag[0] == "e":
        return [_edge_contact(a, b, ra, rb, ha, hb, normal, overlap, tag)]
    if tag[0] == "b":
        # reference face on b (normal points out of b towards a)
        return _clip_faces(a, b, ref=b, inc=a, ref_normal=normal, normal=normal, margin=margin)
    # reference face on a: its outward normal is -normal
    return _clip_faces(a, b, ref=a, inc=b, ref_normal=-normal, normal=normal, margin=margin)


def _face_vertices(body, normal_out):
    """Corners (CCW-free order) of the box face whose outward normal best matches ``normal_out``."""
    axes = _box_axes(body)
    half = np.asarray(body.shape.half_extents)
    k = int(np.argmax(np.abs(axes @ normal_out)))
    sign = 1.0 if axes[k] @ normal_out >= 0 else -1.0
    u, v = [i for i in range(3) if i != k]
    centre = body.position + sign * half[k] * axes[k]
    du, dv = half[u] * axes[u], half[v] * axes[v]
    corners = [centre - du - dv, centre + du - dv, centre + du + dv, centre - du + dv]
    # feature ids: face index * 4 + corner
    face_id = 2 * k + (0 if sign > 0 else 1)
    return corners, face_id, (axes[u], half[u]), (axes[v], half[v]), centre


def _dot(u, v) -> float:
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


def _clip_faces(a, b, ref, inc, ref_normal, normal, margin):
    ref_corners, ref_face, (ua, uh), (va, vh), ref_centre = _face_vertices(ref, ref_normal)
    inc_corners, inc_face, *_ = _face_vertices(inc, -ref_normal)
    # plain-float polygon: clipping a handful of points is cheaper without numpy
    poly = [(p.tolist(), inc_face * 4 + i) for i, p in enumerate(inc_corners)]
    centre = ref_centre.tolist()
    for axis, extent in ((ua, uh), (-ua, uh), (va, vh), (-va, vh)):
        axis = axis.tolist()
        poly = _clip_polygon(poly, axis, _dot(axis, centre) + extent)
        if not poly:
            return []
    rn = ref_normal.tolist()
    ref_offset = _dot(rn, centre)
    pts = []
    for p, fid in poly:
        depth = ref_offset - _dot(rn, p)
        if depth >= -margin:
            # move onto the midpoint between the two surfaces
            h = 0.5 * depth
            pts.append((np.array([p[0] + h * rn[0], p[1] + h * rn[1], p[2] + h * rn[2]]), depth, fid + 100 * ref_face))
    pts = _reduce_manifold(pts)
    return [_make(a, b, p, normal, depth, fid) for p, depth, fid in pts]


def _clip_polygon(poly, axis, offset):
    """Sutherland-Hodgman clip keeping points with axis . p <= offset (points are 3-lists)."""
    out = []
    n = len(poly)
    dists = [_dot(axis, p) - offset for p, _ in poly]
    for i in range(n):
        p, fp = poly[i]
        k = (i + 1) % n
        q, fq = poly[k]
        dp, dq = dists[i], dists[k]
        if dp <= 0:
            out.append((p, fp))
        if (dp < 0 < dq) or (dq < 0 < dp):
            t = dp / (dp - dq)
            out.append(([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]), p[2] + t * (q[2] - p[2])], 50 + 8 * fp + fq))
    return out


def _reduce_manifold(pts):
    if len(pts) <= MAX_MANIFOLD:
        return pts
    # deepest, farthest from it, widest triangle, then widest on the other side
    order = sorted(range(len(pts)), key=lambda i: (-pts[i][1], i))
    chosen = [order[0]]
    p0 = pts[order[0]][0]
    i1 = max(order, key=lambda i: (norm3(pts[i][0] - p0), -i))
    chosen.append(i1)
    p1 = pts[i1][0]
    edge = p1 - p0

    def area(i):
        return cross(edge, pts[i][0] - p0)

    i2 = max((i for i in order if i not in chosen), key=lambda i: (norm3(area(i)), -i))
    chosen.append(i2)
    ref = area(i2)
    rest = [i for i in order if i not in chosen]
    i3 = max(rest, key=lambda i: (-float(area(i) @ ref), -i))
    chosen.append(i3)
    return [pts[i] for i in sorted(chosen)]


def _edge_contact(a, b, ra, rb, ha, hb, normal, overlap, tag):
    _, i, j = tag
    # supporting edge on a (towards b) and on b (towards a)
    pa = a.position.copy()
    for k in range(3):
        if k != i:
            pa -= np.sign(ra[k] @ normal) * ha[k] * ra[k] if ra[k] @ normal != 0 else 0.0
    pb = b.position.copy()
    for k in range(3):
        if k != j:
            pb += np.sign(rb[k] @ normal) * hb[k] * rb[k] if rb[k] @ normal != 0 else 0.0
    ca, cb = _closest_between_lines(pa, ra[i], ha[i], pb, rb[j], hb[j])
    point = 0.5 * (ca + cb)
    return _make(a, b, point, normal, overlap, 1000 + 3 * i + j)


def _closest_between_lines(pa, da, la, pb, db, lb):
    r = pa - pb
    b = float(da @ db)
    c = float(da @ r)
    f = float(db @ r)
    denom = 1.0 - b * b
    s = (b * f - c) / denom if denom > 1e-12 else 0.0
    s = min(max(s, -la), la)
    t = min(max(b * s + f, -lb), lb)
    s = min(max(b * t - c, -la), la)
    return pa + s * da, pb + t * db


def _swept(a, b, dt) -> list[Contact]:
    """Speculative contact from a ray cast of the relative motion over one step."""
    disp = (a.linear_velocity - b.linear_velocity) * dt
    if float(disp @ disp) == 0.0:
        return []
    ka, ha, pa, rota, ma = gjk.shape_args(a)
    kb, hb, pb, rotb, mb = gjk.shape_args(b)
    hit, toi, normal, ca, cb = gjk.gjk_raycast(ka, ha, pa, rota, ma, kb, hb, pb, rotb, mb, disp, 1e-9)
    if not hit or not np.any(normal):
        return []
    gap = toi * max(0.0, -float(disp @ normal))
    return [_make(a, b, cb, normal, -gap, 2000)]
