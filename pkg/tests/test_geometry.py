import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evoforge.geometry import (
    Aabb,
    DegenerateDirection,
    Primitive,
    Transform,
    apply_transform,
    compose,
    contains_point,
    cuboid,
    cylinder,
    inverse,
    mesh_to_obj,
    monte_carlo_volume,
    points_in_primitive,
    primitive_aabb,
    primitives_overlap,
    projected_area,
    quat_from_axis_angle,
    random_rotation,
    sphere,
    tessellate,
    within_bounds,
)
from evoforge.rng import RngStream


def rand_transform(rng, span=0.5):
    return Transform(
        random_rotation(rng),
        (rng.uniform_in(-span, span), rng.uniform_in(-span, span), rng.uniform_in(-span, span)),
    )


def rand_box(rng, span=0.5):
    return cuboid(
        rng.uniform_in(0.1, 0.6), rng.uniform_in(0.1, 0.6), rng.uniform_in(0.1, 0.6),
        rand_transform(rng, span),
    )


# ---------------------------------------------------------------------------
# containment
# ---------------------------------------------------------------------------

def test_contains_point_unit_cuboid():
    c = cuboid(0.5, 0.5, 0.5)
    assert contains_point(c, (0.0, 0.0, 0.0))
    assert contains_point(c, (0.5, 0.0, 0.0))  # boundary inclusive
    assert not contains_point(c, (0.5000001, 0.0, 0.0))


def test_contains_point_rotated_sphere():
    s = sphere(1.0, Transform(quat_from_axis_angle((1, 2, 3), 1.234)))
    assert contains_point(s, (0.0, 0.0, 0.9999))
    assert not contains_point(s, (0.0, 0.0, 1.0000001))


def test_containment_invariant_under_rigid_motion():
    rng = RngStream(100)
    for _ in range(200):
        prim = rand_box(rng)
        # sample a point with margin from the boundary, in the local frame
        local = tuple(rng.uniform_in(-0.9, 0.9) * h for h in prim.params)
        point = apply_transform(prim.pose, local)
        t = rand_transform(rng)
        moved_prim = Primitive(prim.kind, prim.params, compose(t, prim.pose))
        moved_point = apply_transform(t, point)
        assert contains_point(prim, point)
        assert contains_point(moved_prim, moved_point)


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def test_apply_transform_identity_and_axis_rotation():
    assert apply_transform(Transform(), (1.0, 2.0, 3.0)) == (1.0, 2.0, 3.0)
    quarter = Transform(quat_from_axis_angle((0, 0, 1), math.pi / 2))
    out = apply_transform(quarter, (1.0, 0.0, 0.0))
    assert out == pytest.approx((0.0, 1.0, 0.0), abs=1e-9)


def test_compose_inverse_round_trip():
    rng = RngStream(7)
    for _ in range(1000):
        t = rand_transform(rng)
        p = (rng.uniform_in(-2, 2), rng.uniform_in(-2, 2), rng.uniform_in(-2, 2))
        back = apply_transform(compose(t, inverse(t)), p)
        assert back == pytest.approx(p, abs=1e-9)
        there_back = apply_transform(inverse(t), apply_transform(t, p))
        assert there_back == pytest.approx(p, abs=1e-9)


def test_transform_requires_unit_quaternion():
    with pytest.raises(ValueError):
        Transform((1.0, 0.1, 0.0, 0.0))


# ---------------------------------------------------------------------------
# overlap
# ---------------------------------------------------------------------------

def test_touching_cuboids_overlap():
    a = cuboid(0.5, 0.5, 0.5)
    b = cuboid(0.5, 0.5, 0.5, Transform(translation=(1.0, 0.0, 0.0)))
    assert primitives_overlap(a, b)  # faces touch within eps_contact


def test_gapped_spheres_do_not_overlap():
    a = sphere(0.5)
    b = sphere(0.5, Transform(translation=(1.1, 0.0, 0.0)))
    assert not primitives_overlap(a, b)
    c = sphere(0.5, Transform(translation=(1.0 - 1e-9, 0.0, 0.0)))
    assert primitives_overlap(a, c)


def _sampling_overlap_oracle(a, b, rng, n=10_000):
    """Independent membership oracle: sample the intersection of the two
    tight boxes and look for a point inside both solids."""
    ba, bb = primitive_aabb(a), primitive_aabb(b)
    lo = np.maximum(ba.min, bb.min)
    hi = np.minimum(ba.max, bb.max)
    if np.any(lo >= hi):
        return False
    pts = lo + rng.uniform_array(n * 3).reshape(n, 3) * (hi - lo)
    return bool((points_in_primitive(a, pts) & points_in_primitive(b, pts)).any())


def test_box_box_sat_agrees_with_sampling_oracle():
    rng = RngStream(55)
    disagreements = 0
    positives = 0
    for _ in range(1000):
        a, b = rand_box(rng), rand_box(rng)
        oracle = _sampling_overlap_oracle(a, b, rng)
        if oracle:
            positives += 1
            if not primitives_overlap(a, b):
                disagreements += 1
    assert positives > 100  # the trial mix must actually exercise overlaps
    assert disagreements == 0  # no false negatives against the oracle


def test_overlap_symmetric_across_kind_pairs():
    rng = RngStream(66)
    kinds = [
        lambda t: cuboid(0.3, 0.2, 0.4, t),
        lambda t: sphere(0.3, t),
        lambda t: cylinder(0.25, 0.35, t),
    ]
    for _ in range(200):
        a = rng.choice(kinds)(rand_transform(rng, 0.4))
        b = rng.choice(kinds)(rand_transform(rng, 0.4))
        assert primitives_overlap(a, b) == primitives_overlap(b, a)
        if _sampling_overlap_oracle(a, b, rng):
            assert primitives_overlap(a, b)


def test_cylinder_pair_contact():
    a = cylinder(0.2, 0.5)
    b = cylinder(0.2, 0.5, Transform(translation=(0.0, 0.0, 1.0)))  # end caps touch
    assert primitives_overlap(a, b)
    c = cylinder(0.2, 0.5, Transform(translation=(0.0, 0.0, 1.2)))
    assert not primitives_overlap(a, c)


# ---------------------------------------------------------------------------
# Monte Carlo volume
# ---------------------------------------------------------------------------

def test_mc_volume_unit_cube():
    v = monte_carlo_volume([cuboid(0.5, 0.5, 0.5)], 1_000_000, RngStream(1))
    assert v == pytest.approx(1.0, abs=0.01)


def test_mc_volume_unit_sphere():
    v = monte_carlo_volume([sphere(1.0)], 1_000_000, RngStream(2))
    assert v == pytest.approx(4.0 * math.pi / 3.0, abs=0.02)


def test_mc_volume_disjoint_union_adds():
    shapes = [
        cuboid(0.5, 0.5, 0.5),
        cuboid(0.5, 0.5, 0.5, Transform(translation=(3.0, 0.0, 0.0))),
    ]
    v = monte_carlo_volume(shapes, 1_000_000, RngStream(3))
    assert v == pytest.approx(2.0, abs=0.02)


def test_mc_volume_subset_never_larger():
    # S1 inside S2: estimate(S1) <= estimate(S2) + 3 sigma
    rng = RngStream(4)
    inner = sphere(0.5)
    outer = sphere(0.8)
    n = 200_000
    v1 = monte_carlo_volume([inner], n, rng)
    v2 = monte_carlo_volume([outer], n, rng)
    sigma = v2 / math.sqrt(n)  # generous bound on estimator spread
    assert v1 <= v2 + 3 * sigma


def test_mc_volume_scaling_cubes():
    rng = RngStream(5)
    small = monte_carlo_volume([cuboid(0.5, 0.4, 0.3)], 400_000, rng)
    big = monte_carlo_volume([cuboid(1.0, 0.8, 0.6)], 400_000, rng)
    assert big == pytest.approx(8.0 * small, rel=0.02)


# ---------------------------------------------------------------------------
# projected area
# ---------------------------------------------------------------------------

def test_projected_area_unit_cube_axis():
    assert projected_area([cuboid(0.5, 0.5, 0.5)], (1, 0, 0), 512) == pytest.approx(1.0, abs=0.01)


def test_projected_area_sphere_any_direction():
    rng = RngStream(6)
    for _ in range(3):
        d = np.array([rng.normal(), rng.normal(), rng.normal()])
        d /= np.linalg.norm(d)
        area = projected_area([sphere(1.0)], tuple(d), 512)
        assert area == pytest.approx(math.pi, abs=0.02)


def test_projected_area_cube_diagonal():
    d = (1 / math.sqrt(3),) * 3
    # analytic silhouette of the unit cube along u is sum(|u_i|) = sqrt(3)
    area = projected_area([cuboid(0.5, 0.5, 0.5)], d, 512)
    assert area == pytest.approx(math.sqrt(3), abs=0.02)
    finer = projected_area([cuboid(0.5, 0.5, 0.5)], d, 1024)
    assert abs(finer - math.sqrt(3)) <= abs(area - math.sqrt(3)) + 0.005


def test_projected_area_translation_invariant_along_direction():
    rng = RngStream(8)
    shapes = [rand_box(rng), sphere(0.4, rand_transform(rng))]
    d = np.array([1.0, 2.0, -0.5])
    d /= np.linalg.norm(d)
    base = projected_area(shapes, tuple(d), 256)
    moved = [
        Primitive(s.kind, s.params, Transform(s.pose.rotation, tuple(np.asarray(s.pose.translation) + 2.5 * d)))
        for s in shapes
    ]
    assert projected_area(moved, tuple(d), 256) == pytest.approx(base, abs=1e-12)


def test_projected_area_scaling():
    rng = RngStream(9)
    box = rand_box(rng)
    area1 = projected_area([box], (0, 0, 1), 512)
    doubled = Primitive(
        box.kind,
        tuple(2 * p for p in box.params),
        Transform(box.pose.rotation, tuple(2 * t for t in box.pose.translation)),
    )
    area2 = projected_area([doubled], (0, 0, 1), 512)
    assert area2 == pytest.approx(4.0 * area1, rel=0.02)


def test_projected_area_rejects_non_unit_direction():
    with pytest.raises(DegenerateDirection):
        projected_area([sphere(1.0)], (1.0, 1.0, 0.0), 64)
    with pytest.raises(ValueError):
        projected_area([sphere(1.0)], (0, 0, 1), 8)


def test_projected_area_monotone_under_added_shape():
    rng = RngStream(10)
    for _ in range(10):
        base = [rand_box(rng)]
        extra = base + [sphere(0.3, rand_transform(rng))]
        a0 = projected_area(base, (0, 0, 1), 256)
        a1 = projected_area(extra, (0, 0, 1), 256)
        # union silhouette only grows; allow one grid-cell band of slack
        assert a1 >= a0 - 0.02


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def test_within_bounds_basics():
    box = Aabb((-1, -1, -1), (1, 1, 1))
    assert within_bounds([cuboid(0.5, 0.5, 0.5)], box)
    assert within_bounds([], box)  # vacuous


def test_within_bounds_rotated_cube_exceeds_tight_box():
    rot45 = Transform(quat_from_axis_angle((0, 0, 1), math.pi / 4))
    tight = Aabb((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))
    # rotated footprint half-width grows to sqrt(2)/2 > 0.5
    assert not within_bounds([cuboid(0.5, 0.5, 0.5, rot45)], tight)
    assert within_bounds([cuboid(0.5, 0.5, 0.5, rot45)], Aabb((-1, -1, -1), (1, 1, 1)))


def test_cylinder_aabb_is_tight():
    rng = RngStream(11)
    for _ in range(50):
        c = cylinder(0.3, 0.5, rand_transform(rng))
        box = primitive_aabb(c)
        pts = rng.uniform_array(3000).reshape(1000, 3)
        pts = np.asarray(box.min) + pts * (np.asarray(box.max) - np.asarray(box.min))
        inside = points_in_primitive(c, pts)
        assert np.all(
            (pts[inside] >= np.asarray(box.min) - 1e-9)
            & (pts[inside] <= np.asarray(box.max) + 1e-9)
        )


# ---------------------------------------------------------------------------
# tessellation and OBJ export
# ---------------------------------------------------------------------------

def test_tessellate_cuboid_counts():
    mesh = tessellate([cuboid(0.5, 0.5, 0.5)])
    assert len(mesh.vertices) == 8
    assert len(mesh.triangles) == 12


def test_tessellate_sphere_counts():
    mesh = tessellate([sphere(1.0)])
    # UV grid: poles + 32 * 15 ring vertices; 2*32 cap fans + 14*32*2 band tris
    assert len(mesh.vertices) == 2 + 32 * 15
    assert len(mesh.triangles) == 2 * 32 + 14 * 32 * 2


def test_tessellate_cylinder_counts():
    mesh = tessellate([cylinder(0.5, 1.0)])
    assert len(mesh.vertices) == 2 + 2 * 32
    assert len(mesh.triangles) == 4 * 32


def test_tessellate_concatenates_with_offsets():
    one = tessellate([cuboid(0.5, 0.5, 0.5)])
    two = tessellate([cuboid(0.5, 0.5, 0.5), sphere(1.0, Transform(translation=(3, 0, 0)))])
    assert two.vertices[: len(one.vertices)] == one.vertices
    assert two.triangles[: len(one.triangles)] == one.triangles
    min_sphere_index = min(min(t) for t in two.triangles[len(one.triangles):])
    assert min_sphere_index == len(one.vertices)


def test_no_degenerate_triangles():
    mesh = tessellate([cuboid(0.2, 0.3, 0.4), sphere(0.5), cylinder(0.3, 0.2)])
    v = np.asarray(mesh.vertices)
    for a, b, c in mesh.triangles:
        area = 0.5 * np.linalg.norm(np.cross(v[b] - v[a], v[c] - v[a]))
        assert area > 1e-12


def test_obj_format():
    mesh = tessellate([cuboid(0.5, 0.5, 0.5)])
    text = mesh_to_obj(mesh)
    lines = text.split("\n")
    assert lines[0].startswith("v ")
    assert "\r" not in text
    v_lines = [l for l in lines if l.startswith("v ")]
    f_lines = [l for l in lines if l.startswith("f ")]
    assert len(v_lines) == 8 and len(f_lines) == 12
    indices = [int(tok) for l in f_lines for tok in l.split()[1:]]
    assert min(indices) == 1 and max(indices) == 8  # 1-based
    # 9 significant digits survive
    third = mesh_to_obj(tessellate([cuboid(1 / 3, 0.5, 0.5)]))
    assert "0.333333333" in third


def test_aabb_validation():
    with pytest.raises(ValueError):
        Aabb((1, 0, 0), (0, 1, 1))


@given(st.floats(0.05, 2.0), st.floats(0.05, 2.0), st.floats(0.05, 2.0))
@settings(max_examples=30, deadline=None)
def test_primitive_aabb_contains_probe_points(hx, hy, hz):
    rng = RngStream(12)
    prim = cuboid(hx, hy, hz, rand_transform(rng))
    box = primitive_aabb(prim)
    corners = np.array(
        [(sx * hx, sy * hy, sz * hz) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    )
    world = np.array([apply_transform(prim.pose, c) for c in corners])
    assert np.all(world >= np.asarray(box.min) - 1e-9)
    assert np.all(world <= np.asarray(box.max) + 1e-9)
