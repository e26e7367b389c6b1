"""Primitive-shape math: containment, overlap, volume, silhouette area,
rigid transforms, and triangle-mesh export.

A design is treated as the plain set-union of its primitives; there is no
CSG.  All functions here are pure, and the batch entry points are
vectorized with numpy because the Monte Carlo and ray-grid queries sit on
the hot path of genome validation.

Conventions: quaternions are (w, x, y, z) unit tuples; primitives live in
a local frame (cuboid axis-aligned around the origin, cylinder axis along
local z, sphere centered) and carry a pose into the world frame; boundary
points count as inside (closed sets), which is what makes "touching" an
electrical connection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .rng import RngStream, stable_hash64

#: Touching/overlap tolerance in meters: well below any mutation step
#: size, well above accumulated float noise.
EPS_CONTACT = 1e-6

_BOUNDS_TOL = 1e-9


class DegenerateDirection(ValueError):
    """Raised when a projection direction is not a unit vector."""


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

IDENTITY_QUAT = (1.0, 0.0, 0.0, 0.0)


def quat_normalize(q) -> tuple[float, float, float, float]:
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return (w / n, x / n, y / n, z / n)


def quat_mul(a, b) -> tuple[float, float, float, float]:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conj(q) -> tuple[float, float, float, float]:
    w, x, y, z = q
    return (w, -x, -y, -z)


def quat_rotate(q, v) -> tuple[float, float, float]:
    """Rotate vector v by unit quaternion q."""
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 * (q_vec x v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_from_axis_angle(axis, angle: float) -> tuple[float, float, float, float]:
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        return IDENTITY_QUAT
    s = math.sin(angle / 2.0) / n
    return quat_normalize((math.cos(angle / 2.0), ax * s, ay * s, az * s))


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class Transform:
    """Rigid motion: rotation (unit quaternion), then translation."""

    rotation: tuple[float, float, float, float] = IDENTITY_QUAT
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        w, x, y, z = self.rotation
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {n} deviates from 1 beyond 1e-9")


IDENTITY = Transform()


def apply_transform(t: Transform, point) -> tuple[float, float, float]:
    rx, ry, rz = quat_rotate(t.rotation, point)
    tx, ty, tz = t.translation
    return (rx + tx, ry + ty, rz + tz)


def compose(a: Transform, b: Transform) -> Transform:
    """Transform equivalent to applying b first, then a."""
    q = quat_normalize(quat_mul(a.rotation, b.rotation))
    return Transform(q, apply_transform(a, b.translation))


def inverse(t: Transform) -> Transform:
    q = quat_conj(t.rotation)
    ix, iy, iz = quat_rotate(q, t.translation)
    return Transform(q, (-ix, -iy, -iz))


def random_rotation(rng: RngStream) -> tuple[float, float, float, float]:
    """Uniform random orientation (Shoemake's subgroup method)."""
    u1, u2, u3 = rng.uniform(), rng.uniform(), rng.uniform()
    a, b = math.sqrt(1.0 - u1), math.sqrt(u1)
    return quat_normalize(
        (
            a * math.sin(2.0 * math.pi * u2),
            a * math.cos(2.0 * math.pi * u2),
            b * math.sin(2.0 * math.pi * u3),
            b * math.cos(2.0 * math.pi * u3),
        )
    )


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

CUBOID = "cuboid"
CYLINDER = "cylinder"
SPHERE = "sphere"

_PARAM_COUNT = {CUBOID: 3, CYLINDER: 2, SPHERE: 1}


@dataclass(frozen=True)
class Primitive:
    """A posed solid.

    params by kind: cuboid (hx, hy, hz) half-extents; cylinder
    (radius, half_height) with axis along local z; sphere (radius,).
    """

    kind: str
    params: tuple[float, ...]
    pose: Transform = IDENTITY

    def __post_init__(self):
        if self.kind not in _PARAM_COUNT:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if len(self.params) != _PARAM_COUNT[self.kind]:
            raise ValueError(f"{self.kind} takes {_PARAM_COUNT[self.kind]} parameters")
        for p in self.params:
            if not (math.isfinite(p) and p > 0.0):
                raise ValueError(f"{self.kind} parameters must be finite and > 0")


def cuboid(hx: float, hy: float, hz: float, pose: Transform = IDENTITY) -> Primitive:
    return Primitive(CUBOID, (hx, hy, hz), pose)


def cylinder(radius: float, half_height: float, pose: Transform = IDENTITY) -> Primitive:
    return Primitive(CYLINDER, (radius, half_height), pose)


def sphere(radius: float, pose: Transform = IDENTITY) -> Primitive:
    return Primitive(SPHERE, (radius,), pose)


@dataclass(frozen=True)
class Aabb:
    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        if any(lo > hi for lo, hi in zip(self.min, self.max)):
            raise ValueError("Aabb min must be <= max componentwise")

    def volume(self) -> float:
        return math.prod(hi - lo for lo, hi in zip(self.min, self.max))

    def contains(self, other: Aabb, tol: float = _BOUNDS_TOL) -> bool:
        return all(so >= lo - tol for so, lo in zip(other.min, self.min)) and all(
            so <= hi + tol for so, hi in zip(other.max, self.max)
        )

    def corners(self) -> list[tuple[float, float, float]]:
        (x0, y0, z0), (x1, y1, z1) = self.min, self.max
        return [(x, y, z) for x in (x0, x1) for y in (y0, y1) for z in (z0, z1)]

    @staticmethod
    def union(boxes: list[Aabb]) -> Aabb:
        if not boxes:
            raise ValueError("union of zero boxes")
        mins = [min(b.min[i] for b in boxes) for i in range(3)]
        maxs = [max(b.max[i] for b in boxes) for i in range(3)]
        return Aabb(tuple(mins), tuple(maxs))


def primitive_aabb(p: Primitive) -> Aabb:
    """Tight world-frame bounding box, accounting for rotation."""
    cx, cy, cz = p.pose.translation
    if p.kind == SPHERE:
        r = p.params[0]
        half = (r, r, r)
    elif p.kind == CUBOID:
        r_abs = np.abs(quat_to_matrix(p.pose.rotation))
        half = tuple(float(v) for v in r_abs @ np.asarray(p.params))
    else:  # cylinder: exact box of a rotated capped cylinder
        radius, hh = p.params
        axis = quat_rotate(p.pose.rotation, (0.0, 0.0, 1.0))
        half = tuple(
            hh * abs(a) + radius * math.sqrt(max(0.0, 1.0 - a * a)) for a in axis
        )
    return Aabb(
        (cx - half[0], cy - half[1], cz - half[2]),
        (cx + half[0], cy + half[1], cz + half[2]),
    )


def shapes_aabb(shapes: list[Primitive]) -> Aabb:
    return Aabb.union([primitive_aabb(s) for s in shapes])


# ---------------------------------------------------------------------------
# containment
# ---------------------------------------------------------------------------

def _to_local(p: Primitive, pts: np.ndarray) -> np.ndarray:
    # (pts - t) @ R fused as pts @ R - t @ R: one fewer full-size temporary
    rot = quat_to_matrix(p.pose.rotation).astype(pts.dtype)
    local = pts @ rot
    local -= np.asarray(p.pose.translation, dtype=pts.dtype) @ rot
    return local


def points_in_primitive(p: Primitive, pts: np.ndarray, inflate: float = 0.0) -> np.ndarray:
    """Boolean mask of points inside the (optionally inflated) closed solid.

    Math runs in the dtype of `pts` (float64 unless the caller downcast)."""
    pts = np.atleast_2d(np.asarray(pts))
    if pts.dtype not in (np.float32, np.float64):
        pts = pts.astype(np.float64)
    local = _to_local(p, pts)
    if p.kind == CUBOID:
        h = np.asarray(p.params, dtype=pts.dtype) + pts.dtype.type(inflate)
        return np.all(np.abs(local) <= h, axis=1)
    if p.kind == SPHERE:
        r = pts.dtype.type(p.params[0] + inflate)
        return np.einsum("ij,ij->i", local, local) <= r * r
    radius, hh = p.params
    r = pts.dtype.type(radius + inflate)
    rad_ok = local[:, 0] ** 2 + local[:, 1] ** 2 <= r * r
    return rad_ok & (np.abs(local[:, 2]) <= pts.dtype.type(hh + inflate))


def points_in_any(shapes: list[Primitive], pts: np.ndarray) -> np.ndarray:
    # bulk membership runs in float32: the cast error (~1e-7 relative) is
    # orders of magnitude below Monte Carlo noise, and the traffic halves
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float32))
    hit = np.zeros(len(pts), dtype=bool)
    for s in shapes:
        hit |= points_in_primitive(s, pts)
    return hit


def contains_point(p: Primitive, point) -> bool:
    return bool(points_in_primitive(p, np.asarray(point, dtype=float)[None, :])[0])


# ---------------------------------------------------------------------------
# overlap
# ---------------------------------------------------------------------------

def _sphere_center_distance(p: Primitive, center: np.ndarray) -> float:
    """Distance from a world-frame point to the closed solid p (0 if inside)."""
    local = _to_local(p, center[None, :])[0]
    if p.kind == CUBOID:
        d = np.maximum(np.abs(local) - np.asarray(p.params), 0.0)
        return float(np.linalg.norm(d))
    if p.kind == SPHERE:
        return max(0.0, float(np.linalg.norm(local)) - p.params[0])
    radius, hh = p.params
    rad = math.hypot(local[0], local[1])
    dr = max(0.0, rad - radius)
    dz = max(0.0, abs(local[2]) - hh)
    return math.hypot(dr, dz)


def _box_vertices_axes(p: Primitive) -> tuple[np.ndarray, np.ndarray]:
    rot = quat_to_matrix(p.pose.rotation)
    h = np.asarray(p.params)
    signs = np.array([(sx, sy, sz) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    verts = (signs * h) @ rot.T + np.asarray(p.pose.translation)
    return verts, rot  # columns of rot are the box's world axes


def _boxes_overlap_sat(a: Primitive, b: Primitive, eps: float) -> bool:
    """Separating-axis test over 15 candidate axes, with contact tolerance."""
    va, ra = _box_vertices_axes(a)
    vb, rb = _box_vertices_axes(b)
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            c = np.cross(ra[:, i], rb[:, j])
            n = np.linalg.norm(c)
            if n > 1e-9:
                axes.append(c / n)
    for axis in axes:
        pa = va @ axis
        pb = vb @ axis
        if pa.min() > pb.max() + eps or pb.min() > pa.max() + eps:
            return False
    return True


@lru_cache(maxsize=512)
def _local_probe_points(kind: str, params: tuple[float, ...], n: int = 2048) -> np.ndarray:
    """Deterministic volume + surface sample points in the local frame."""
    rng = RngStream(0x5A11E47, stream_id=stable_hash64(f"{kind}:{params!r}"))
    half = n // 2
    u = rng.uniform_array(half * 3).reshape(half, 3)
    if kind == CUBOID:
        h = np.asarray(params)
        vol = (2.0 * u - 1.0) * h
        # surface: pick a face by area, two in-face coordinates
        areas = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]])
        areas = np.repeat(areas, 2)  # -x,+x,-y,+y,-z,+z
        face = np.searchsorted(np.cumsum(areas) / areas.sum(), rng.uniform_array(half))
        s = rng.uniform_array(half * 2).reshape(half, 2) * 2.0 - 1.0
        surf = np.empty((half, 3))
        axis = face // 2
        sign = np.where(face % 2 == 0, -1.0, 1.0)
        for ax in range(3):
            mask = axis == ax
            o1, o2 = (ax + 1) % 3, (ax + 2) % 3
            surf[mask, ax] = sign[mask] * h[ax]
            surf[mask, o1] = s[mask, 0] * h[o1]
            surf[mask, o2] = s[mask, 1] * h[o2]
    elif kind == SPHERE:
        r = params[0]
        d = rng.normal_array(3 * n).reshape(n, 3)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        vol = d[:half] * (r * u[:, 0] ** (1.0 / 3.0))[:, None]
        surf = d[half:] * r
    else:  # cylinder
        radius, hh = params
        theta = 2.0 * math.pi * u[:, 0]
        rad = radius * np.sqrt(u[:, 1])
        vol = np.stack(
            [rad * np.cos(theta), rad * np.sin(theta), (2.0 * u[:, 2] - 1.0) * hh], axis=1
        )
        side_area = 2.0 * math.pi * radius * 2.0 * hh
        cap_area = math.pi * radius * radius
        total = side_area + 2.0 * cap_area
        pick = rng.uniform_array(half)
        t2 = 2.0 * math.pi * rng.uniform_array(half)
        u2 = rng.uniform_array(half)
        surf = np.empty((half, 3))
        on_side = pick < side_area / total
        on_top = (~on_side) & (pick < (side_area + cap_area) / total)
        surf[on_side] = np.stack(
            [
                radius * np.cos(t2[on_side]),
                radius * np.sin(t2[on_side]),
                (2.0 * u2[on_side] - 1.0) * hh,
            ],
            axis=1,
        )
        for mask, z in ((on_top, hh), (~on_side & ~on_top, -hh)):
            rr = radius * np.sqrt(u2[mask])
            surf[mask] = np.stack(
                [rr * np.cos(t2[mask]), rr * np.sin(t2[mask]), np.full(mask.sum(), z)],
                axis=1,
            )
    return np.concatenate([vol, surf], axis=0)


def _probe_points_world(p: Primitive) -> np.ndarray:
    pts = _local_probe_points(p.kind, p.params)
    rot = quat_to_matrix(p.pose.rotation)
    return pts @ rot.T + np.asarray(p.pose.translation)


def primitives_overlap(a: Primitive, b: Primitive, eps: float = EPS_CONTACT) -> bool:
    """True iff the closed shapes share a point, within the contact tolerance.

    Box-box uses the separating-axis theorem and sphere-anything is
    analytic; pairs involving a cylinder fall back to a deterministic
    2048-point surface+volume probe with tolerance inflation (conservative:
    may miss slivers thinner than the probe spacing).
    """
    kinds = {a.kind, b.kind}
    if a.kind == SPHERE or b.kind == SPHERE:
        s, other = (a, b) if a.kind == SPHERE else (b, a)
        center = np.asarray(s.pose.translation, dtype=float)
        return _sphere_center_distance(other, center) <= s.params[0] + eps
    if kinds == {CUBOID}:
        return _boxes_overlap_sat(a, b, eps)
    return bool(
        points_in_primitive(b, _probe_points_world(a), inflate=eps).any()
        or points_in_primitive(a, _probe_points_world(b), inflate=eps).any()
    )


# ---------------------------------------------------------------------------
# volume and silhouette
# ---------------------------------------------------------------------------

def monte_carlo_volume(shapes: list[Primitive], n_samples: int, rng: RngStream) -> float:
    """Unbiased union-volume estimate via uniform sampling in the joint Aabb."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not shapes:
        return 0.0
    box = shapes_aabb(shapes)
    lo = np.asarray(box.min)
    span = np.asarray(box.max) - lo
    box_vol = box.volume()
    if box_vol == 0.0:
        return 0.0
    hits = 0
    remaining = n_samples
    while remaining > 0:
        chunk = min(remaining, 1 << 20)
        pts = lo + rng.uniform_array(chunk * 3).reshape(chunk, 3) * span
        hits += int(points_in_any(shapes, pts).sum())
        remaining -= chunk
    return box_vol * hits / n_samples


def projection_basis(direction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-handed orthonormal (u, v, w) with w along the given unit direction."""
    w = np.asarray(direction, dtype=float)
    norm = float(np.linalg.norm(w))
    if abs(norm - 1.0) > 1e-6:
        raise DegenerateDirection(f"direction must be a unit vector, |d|={norm}")
    w = w / norm
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(w)))] = 1.0
    u = np.cross(w, helper)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    return u, v, w


def _lines_hit_primitive(p: Primitive, origins: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Which of the parallel lines origin + t*direction meet the solid."""
    rot = quat_to_matrix(p.pose.rotation).astype(origins.dtype)
    o = origins @ rot
    o -= np.asarray(p.pose.translation, dtype=origins.dtype) @ rot
    d = np.asarray(direction, dtype=origins.dtype) @ rot
    tiny = 1e-12
    if p.kind == SPHERE:
        r = p.params[0]
        oc = np.einsum("ij,ij->i", o, o)
        od = o @ d
        return oc - od * od <= r * r
    if p.kind == CUBOID:
        h = np.asarray(p.params)
        tmin = np.full(len(o), -np.inf)
        tmax = np.full(len(o), np.inf)
        ok = np.ones(len(o), dtype=bool)
        for k in range(3):
            if abs(d[k]) > tiny:
                t1 = (-h[k] - o[:, k]) / d[k]
                t2 = (h[k] - o[:, k]) / d[k]
                lo = np.minimum(t1, t2)
                hi = np.maximum(t1, t2)
                tmin = np.maximum(tmin, lo)
                tmax = np.minimum(tmax, hi)
            else:
                ok &= np.abs(o[:, k]) <= h[k]
        return ok & (tmin <= tmax)
    radius, hh = p.params
    a = d[0] * d[0] + d[1] * d[1]
    tmin = np.full(len(o), -np.inf)
    tmax = np.full(len(o), np.inf)
    ok = np.ones(len(o), dtype=bool)
    if a > tiny:
        b = o[:, 0] * d[0] + o[:, 1] * d[1]
        c = o[:, 0] ** 2 + o[:, 1] ** 2 - radius * radius
        disc = b * b - a * c
        ok &= disc >= 0.0
        sq = np.sqrt(np.maximum(disc, 0.0))
        tmin = (-b - sq) / a
        tmax = (-b + sq) / a
    else:
        ok &= o[:, 0] ** 2 + o[:, 1] ** 2 <= radius * radius
    if abs(d[2]) > tiny:
        t1 = (-hh - o[:, 2]) / d[2]
        t2 = (hh - o[:, 2]) / d[2]
        tmin = np.maximum(tmin, np.minimum(t1, t2))
        tmax = np.minimum(tmax, np.maximum(t1, t2))
    else:
        ok &= np.abs(o[:, 2]) <= hh
    return ok & (tmin <= tmax)


def projected_area(
    shapes: list[Primitive], direction, grid_resolution: int = 512
) -> float:
    """Silhouette area of the union on the plane perpendicular to direction.

    A grid_resolution^2 ray grid covers the projected bounding rectangle;
    the error is bounded by one grid-cell band around the silhouette
    perimeter.  Each shape is only tested inside its own projected
    sub-rectangle of the grid (its silhouette cannot escape it).
    """
    if grid_resolution < 16:
        raise ValueError("grid_resolution must be >= 16")
    u, v, w = projection_basis(direction)
    if not shapes:
        return 0.0
    shape_windows = []
    for s in shapes:
        corners = np.asarray(primitive_aabb(s).corners())
        us = corners @ u
        vs = corners @ v
        shape_windows.append((float(us.min()), float(us.max()), float(vs.min()), float(vs.max())))
    u0 = min(wnd[0] for wnd in shape_windows)
    u1 = max(wnd[1] for wnd in shape_windows)
    v0 = min(wnd[2] for wnd in shape_windows)
    v1 = max(wnd[3] for wnd in shape_windows)
    if u1 - u0 <= 0.0 or v1 - v0 <= 0.0:
        return 0.0
    res = grid_resolution
    du = (u1 - u0) / res
    dv = (v1 - v0) / res
    uc = u0 + (np.arange(res) + 0.5) * du
    vc = v0 + (np.arange(res) + 0.5) * dv
    hit = np.zeros((res, res), dtype=bool)
    for s, (su0, su1, sv0, sv1) in zip(shapes, shape_windows):
        iu0 = int(np.searchsorted(uc, su0 - 1e-12, side="left"))
        iu1 = int(np.searchsorted(uc, su1 + 1e-12, side="right"))
        iv0 = int(np.searchsorted(vc, sv0 - 1e-12, side="left"))
        iv1 = int(np.searchsorted(vc, sv1 + 1e-12, side="right"))
        if iu0 >= iu1 or iv0 >= iv1:
            continue
        gu, gv = np.meshgrid(uc[iu0:iu1], vc[iv0:iv1], indexing="ij")
        # float32 line tests: classification noise at the silhouette edge is
        # far below the one-cell error band the grid already carries
        origins = (gu.reshape(-1, 1) * u + gv.reshape(-1, 1) * v).astype(np.float32)
        window = _lines_hit_primitive(s, origins, w).reshape(iu1 - iu0, iv1 - iv0)
        hit[iu0:iu1, iv0:iv1] |= window
    return float(hit.sum()) * du * dv


def convex_polygon_grid_area(
    polygons: list[np.ndarray], grid_resolution: int = 512
) -> float:
    """Union area of 2D convex polygons by the same ray-grid counting scheme."""
    polys = [np.asarray(p, dtype=float) for p in polygons if len(p) >= 3]
    if not polys:
        return 0.0
    allv = np.concatenate(polys, axis=0)
    u0, u1 = float(allv[:, 0].min()), float(allv[:, 0].max())
    v0, v1 = float(allv[:, 1].min()), float(allv[:, 1].max())
    if u1 - u0 <= 0.0 or v1 - v0 <= 0.0:
        return 0.0
    res = grid_resolution
    du = (u1 - u0) / res
    dv = (v1 - v0) / res
    uc = u0 + (np.arange(res) + 0.5) * du
    vc = v0 + (np.arange(res) + 0.5) * dv
    gu, gv = np.meshgrid(uc, vc, indexing="ij")
    pts = np.stack([gu.ravel(), gv.ravel()], axis=1)
    hit = np.zeros(len(pts), dtype=bool)
    for poly in polys:
        inside = np.ones(len(pts), dtype=bool)
        n = len(poly)
        # poly must be convex; orientation detected from the signed area
        area2 = 0.0
        for i in range(n):
            x0, y0 = poly[i]
            x1, y1 = poly[(i + 1) % n]
            area2 += x0 * y1 - x1 * y0
        sign = 1.0 if area2 >= 0.0 else -1.0
        for i in range(n):
            a = poly[i]
            b = poly[(i + 1) % n]
            cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
            inside &= sign * cross >= 0.0
        hit |= inside
    return float(hit.sum()) * du * dv


def within_bounds(shapes: list[Primitive], box: Aabb) -> bool:
    """True iff every shape's tight Aabb is contained in box (vacuous for [])."""
    return all(box.contains(primitive_aabb(s)) for s in shapes)


# ---------------------------------------------------------------------------
# tessellation
# ---------------------------------------------------------------------------

CYLINDER_SEGMENTS = 32
SPHERE_SEGMENTS = 32
SPHERE_RINGS = 16


@dataclass(frozen=True)
class TriangleMesh:
    vertices: tuple[tuple[float, float, float], ...]
    triangles: tuple[tuple[int, int, int], ...]


def _cuboid_mesh(params) -> tuple[list, list]:
    hx, hy, hz = params
    verts = [
        (sx * hx, sy * hy, sz * hz)
        for sx in (-1, 1)
        for sy in (-1, 1)
        for sz in (-1, 1)
    ]
    # index = 4*ix + 2*iy + iz with i=0 => -h, 1 => +h
    faces = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    tris = []
    for a, b, c, d in faces:
        tris.append((a, b, c))
        tris.append((a, c, d))
    return verts, tris


def _cylinder_mesh(params) -> tuple[list, list]:
    radius, hh = params
    n = CYLINDER_SEGMENTS
    verts = [(0.0, 0.0, -hh), (0.0, 0.0, hh)]
    bottom = []
    top = []
    for i in range(n):
        th = 2.0 * math.pi * i / n
        x, y = radius * math.cos(th), radius * math.sin(th)
        bottom.append(len(verts))
        verts.append((x, y, -hh))
        top.append(len(verts))
        verts.append((x, y, hh))
    tris = []
    for i in range(n):
        j = (i + 1) % n
        tris.append((0, bottom[j], bottom[i]))
        tris.append((1, top[i], top[j]))
        tris.append((bottom[i], bottom[j], top[j]))
        tris.append((bottom[i], top[j], top[i]))
    return verts, tris


def _sphere_mesh(params) -> tuple[list, list]:
    r = params[0]
    segs, rings = SPHERE_SEGMENTS, SPHERE_RINGS
    verts = [(0.0, 0.0, r), (0.0, 0.0, -r)]
    ring_idx = []
    for k in range(1, rings):
        phi = math.pi * k / rings
        z = r * math.cos(phi)
        rr = r * math.sin(phi)
        row = []
        for i in range(segs):
            th = 2.0 * math.pi * i / segs
            row.append(len(verts))
            verts.append((rr * math.cos(th), rr * math.sin(th), z))
        ring_idx.append(row)
    tris = []
    first, last = ring_idx[0], ring_idx[-1]
    for i in range(segs):
        j = (i + 1) % segs
        tris.append((0, first[i], first[j]))
        tris.append((1, last[j], last[i]))
    for k in range(len(ring_idx) - 1):
        a, b = ring_idx[k], ring_idx[k + 1]
        for i in range(segs):
            j = (i + 1) % segs
            tris.append((a[i], b[i], b[j]))
            tris.append((a[i], b[j], a[j]))
    return verts, tris


_MESH_FN = {CUBOID: _cuboid_mesh, CYLINDER: _cylinder_mesh, SPHERE: _sphere_mesh}


def tessellate(shapes: list[Primitive]) -> TriangleMesh:
    """Triangle soup of the union: watertight per primitive, no CSG."""
    vertices: list[tuple[float, float, float]] = []
    triangles: list[tuple[int, int, int]] = []
    for s in shapes:
        verts, tris = _MESH_FN[s.kind](s.params)
        offset = len(vertices)
        vertices.extend(apply_transform(s.pose, v) for v in verts)
        triangles.extend((a + offset, b + offset, c + offset) for a, b, c in tris)
    return TriangleMesh(tuple(vertices), tuple(triangles))


def mesh_to_obj(mesh: TriangleMesh) -> str:
    """ASCII OBJ subset: v/f lines, 1-based indices, LF endings."""
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n" if lines else ""
