import json

import pytest

from evoforge.genomes import (
    CONDUCTOR,
    FEED,
    FREE_SPACE,
    KIND_ANTENNA,
    KIND_POINTCLOUD,
    KIND_REALVECTOR,
    KIND_SPACECRAFT,
    DeserializeError,
    PointCloudGenome,
    ShapeConstraints,
    ShapeGenome,
    ShapeNode,
    VersionError,
    compatible,
    conductor_components,
    deserialize,
    flatten_tree,
    hash_genome,
    serialize,
    tessellate_genome,
    union_volume,
    validate,
    validate_antenna,
    validate_spacecraft,
)
from evoforge.geometry import Aabb, Transform, cuboid, cylinder
from evoforge.mutation import (
    default_pointcloud_constraints,
    default_shape_constraints,
    random_genome,
)
from evoforge.rng import RngStream

ANT_CONS = ShapeConstraints(bounds=Aabb((-1, -1, -1), (1, 1, 1)), max_nodes=12, max_feeds=1)


def rod(z_offset, half_len=0.25, r=0.02, material=CONDUCTOR, children=()):
    return ShapeNode(
        cylinder(r, half_len, Transform(translation=(0.0, 0.0, z_offset))),
        material,
        tuple(children),
    )


def dipole(gap=0.05, half_len=0.25):
    """Two rods bridged only by a feed: the canonical valid antenna.

    Poses are relative to the parent frame; the feed overlaps each rod by
    1 mm so the contacts are robust.
    """
    h_f = gap / 2 + 0.001
    rod_b = rod(h_f + half_len - 0.002, half_len=half_len)  # in the feed frame
    feed = ShapeNode(
        cylinder(0.01, h_f, Transform(translation=(0.0, 0.0, half_len + gap / 2))),
        FEED,
        (rod_b,),
    )
    root = rod(0.0, half_len=half_len, children=(feed,))
    return ShapeGenome(root, KIND_ANTENNA, ANT_CONS)


def test_dipole_is_valid():
    v = validate_antenna(dipole())
    assert v.ok, v.reason


def test_short_circuit_detected():
    # third conductor touching both rods closes a loop around the feed
    g = dipole()
    bridge = ShapeNode(
        cuboid(0.02, 0.02, 0.40, Transform(translation=(0.0, 0.0, 0.15))),
        CONDUCTOR,
    )
    root = ShapeNode(g.root.primitive, g.root.material, g.root.children + (bridge,))
    v = validate_antenna(ShapeGenome(root, KIND_ANTENNA, ANT_CONS))
    assert not v.ok and v.reason == "Short"


def test_no_feed_detected():
    root = rod(0.0)
    v = validate_antenna(ShapeGenome(root, KIND_ANTENNA, ANT_CONS))
    assert not v.ok and v.reason == "NoFeed"


def test_unterminated_feed_detected():
    # a feed touching only one conductor cannot bridge two pieces
    feed = ShapeNode(
        cylinder(0.01, 0.03, Transform(translation=(0.0, 0.0, 0.27))), FEED
    )
    root = rod(0.0, children=(feed,))
    v = validate_antenna(ShapeGenome(root, KIND_ANTENNA, ANT_CONS))
    assert not v.ok and v.reason == "FeedUnterminated"


def test_bridge_to_free_space_unterminates_feed():
    # turning one terminal rod to air must invalidate the antenna
    g = dipole()
    feed = g.root.children[0]
    air_rod = ShapeNode(feed.children[0].primitive, FREE_SPACE)
    new_feed = ShapeNode(feed.primitive, FEED, (air_rod,))
    root = ShapeNode(g.root.primitive, g.root.material, (new_feed,))
    v = validate_antenna(ShapeGenome(root, KIND_ANTENNA, ANT_CONS))
    assert not v.ok and v.reason == "FeedUnterminated"


def test_antenna_out_of_bounds():
    g = dipole()
    cons = ShapeConstraints(bounds=Aabb((-0.1, -0.1, -0.1), (0.1, 0.1, 0.1)), max_feeds=1)
    v = validate_antenna(ShapeGenome(g.root, KIND_ANTENNA, cons))
    assert not v.ok and v.reason == "OutOfBounds"


def test_conductor_between_two_rods_becomes_valid_feed():
    # chain A-B-C of touching conductors (A and C apart): B turned to feed
    # bridges two now-disconnected pieces; an isolated node cannot
    mid = ShapeNode(
        cylinder(0.015, 0.06, Transform(translation=(0.0, 0.0, 0.30))),
        CONDUCTOR,
        (rod(0.30, half_len=0.25),),  # rod C, child of B
    )
    root = rod(0.0, children=(mid,))  # rod A spans z in [-0.25, 0.25]
    as_conductors = ShapeGenome(root, KIND_ANTENNA, ANT_CONS)
    assert validate_antenna(as_conductors).reason == "NoFeed"
    feed_mid = ShapeNode(mid.primitive, FEED, mid.children)
    bridged = ShapeGenome(
        ShapeNode(root.primitive, root.material, (feed_mid,)), KIND_ANTENNA, ANT_CONS
    )
    assert validate_antenna(bridged).ok
    # same feed with nothing else to touch: unterminated
    lone = ShapeGenome(
        ShapeNode(feed_mid.primitive, FEED, ()), KIND_ANTENNA, ANT_CONS
    )
    assert validate_antenna(lone).reason in ("FeedUnterminated", "NoFeed")


def test_multiple_feeds_detected():
    g = dipole()
    extra_feed = ShapeNode(
        cylinder(0.005, 0.01, Transform(translation=(0.0, 0.0, -0.2))), FEED
    )
    root = ShapeNode(g.root.primitive, g.root.material, g.root.children + (extra_feed,))
    v = validate_antenna(ShapeGenome(root, KIND_ANTENNA, ANT_CONS))
    assert not v.ok and v.reason == "MultipleFeeds"


def _oracle_components(n, edges):
    """Brute-force union-find oracle, written independently of the module."""
    comp = list(range(n))

    def find(x):
        while comp[x] != x:
            x = comp[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            comp[rb] = ra
    return [find(i) for i in range(n)]


def test_conductor_components_match_union_find_oracle():
    rng = RngStream(77)
    for _ in range(200):
        n = rng.randint(2, 8)
        nodes = []
        for i in range(n):
            x = rng.uniform_in(-0.5, 0.5)
            nodes.append(
                ShapeNode(cuboid(0.1, 0.1, 0.1, Transform(translation=(x, 0.0, 0.0))), CONDUCTOR)
            )
        root = ShapeNode(cuboid(0.6, 0.05, 0.05), CONDUCTOR, tuple(nodes))
        genome = ShapeGenome(root, "shape", ShapeConstraints(bounds=Aabb((-2, -2, -2), (2, 2, 2))))
        world = flatten_tree(genome)
        comp = conductor_components(world)
        from evoforge.geometry import primitives_overlap

        prims = [w.primitive for w in world]
        edges = [
            (i, j)
            for i in range(len(prims))
            for j in range(i + 1, len(prims))
            if primitives_overlap(prims[i], prims[j])
        ]
        oracle = _oracle_components(len(prims), edges)
        # same partition: pairs agree on same/different component
        for i in range(len(prims)):
            for j in range(i + 1, len(prims)):
                assert (comp[i] == comp[j]) == (oracle[i] == oracle[j])


# ---------------------------------------------------------------------------
# spacecraft validity
# ---------------------------------------------------------------------------

SC_CONS = default_shape_constraints(KIND_SPACECRAFT)


def test_full_12u_box_is_valid():
    # the full envelope box holds 0.2*0.2*0.3 = 0.012 m^3 >= 0.006 m^3
    root = ShapeNode(cuboid(0.0999, 0.0999, 0.1499), CONDUCTOR)
    v = validate_spacecraft(ShapeGenome(root, KIND_SPACECRAFT, SC_CONS))
    assert v.ok, v.reason


def test_thin_rod_has_insufficient_cargo():
    root = ShapeNode(cylinder(0.005, 0.14), CONDUCTOR)
    v = validate_spacecraft(ShapeGenome(root, KIND_SPACECRAFT, SC_CONS))
    assert not v.ok and v.reason == "InsufficientCargo"


def test_spacecraft_out_of_bounds():
    root = ShapeNode(cuboid(0.3, 0.3, 0.3), CONDUCTOR)
    v = validate_spacecraft(ShapeGenome(root, KIND_SPACECRAFT, SC_CONS))
    assert not v.ok and v.reason == "OutOfBounds"


def test_union_volume_is_deterministic_per_genome():
    root = ShapeNode(cuboid(0.09, 0.09, 0.14), CONDUCTOR)
    g = ShapeGenome(root, KIND_SPACECRAFT, SC_CONS)
    g2 = deserialize(serialize(g))
    assert union_volume(g) == union_volume(g2)


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------

def test_pointcloud_hull_must_contain_cargo():
    cons = default_pointcloud_constraints()
    rng = RngStream(5)
    g = random_genome(KIND_POINTCLOUD, cons, rng)
    assert validate(g).ok
    # pull one hull vertex inside the cargo region: the hull loses a corner
    verts = list(g.vertices)
    verts[0] = (0.0, 0.0, 0.0)
    pulled = PointCloudGenome(tuple(verts), cons)
    v = validate_spacecraft(pulled)
    assert not v.ok and v.reason == "InsufficientCargo"


def test_pointcloud_vertex_count_floor():
    cons = default_pointcloud_constraints()
    flatish = PointCloudGenome(
        (( -0.05, -0.05, 0.0), (0.05, -0.05, 0.0), (0.0, 0.05, 0.0)), cons
    )
    assert not validate(flatish).ok


def test_pointcloud_out_of_bounds_vertex():
    cons = default_pointcloud_constraints()
    rng = RngStream(6)
    g = random_genome(KIND_POINTCLOUD, cons, rng)
    verts = list(g.vertices)
    verts[0] = (0.5, 0.0, 0.0)
    v = validate_spacecraft(PointCloudGenome(tuple(verts), cons))
    assert not v.ok and v.reason == "OutOfBounds"


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def all_kind_samples(seed=0):
    rng = RngStream(seed)
    return [
        random_genome(KIND_ANTENNA, default_shape_constraints(KIND_ANTENNA), rng),
        random_genome(KIND_SPACECRAFT, SC_CONS, rng),
        random_genome(KIND_POINTCLOUD, default_pointcloud_constraints(), rng),
        random_genome(KIND_REALVECTOR, ((-5.0, 5.0),) * 6, rng),
        random_genome("shape", default_shape_constraints("shape"), rng),
    ]


def test_round_trip_identity_all_kinds():
    for g in all_kind_samples():
        assert deserialize(serialize(g)) == g


def test_round_trip_census_per_kind():
    rng = RngStream(99)
    plans = [
        (KIND_REALVECTOR, ((-5.0, 5.0),) * 6, 1000),
        (KIND_POINTCLOUD, default_pointcloud_constraints(), 1000),
        (KIND_ANTENNA, default_shape_constraints(KIND_ANTENNA), 1000),
        ("shape", default_shape_constraints("shape"), 1000),
        (KIND_SPACECRAFT, SC_CONS, 1000),
    ]
    for kind, space, n in plans:
        for _ in range(n):
            g = random_genome(kind, space, rng)
            assert deserialize(serialize(g)) == g


def test_hash_collision_census():
    # 1e5 distinct random genomes must produce 1e5 distinct 64-bit hashes
    rng = RngStream(123)
    seen = set()
    for _ in range(100_000):
        g = random_genome(KIND_REALVECTOR, ((-5.0, 5.0),) * 4, rng)
        seen.add(hash_genome(g))
    assert len(seen) == 100_000


def test_round_trip_is_bit_exact_on_floats():
    rng = RngStream(1)
    g = random_genome(KIND_REALVECTOR, ((-5.0, 5.0),) * 8, rng)
    g2 = deserialize(serialize(g))
    for a, b in zip(g.values, g2.values):
        assert a.hex() == b.hex()


def test_unknown_type_tag_rejected():
    doc = json.loads(serialize(all_kind_samples()[3]))
    doc["type"] = "voxel"
    with pytest.raises(DeserializeError):
        deserialize(json.dumps(doc))


def test_unknown_version_rejected():
    doc = json.loads(serialize(all_kind_samples()[3]))
    doc["version"] = 99
    with pytest.raises(VersionError):
        deserialize(json.dumps(doc))


def test_malformed_document_location_in_error():
    doc = json.loads(serialize(all_kind_samples()[0]))
    del doc["payload"]["root"]["primitive"]
    with pytest.raises(DeserializeError, match=r"\$\.payload\.root"):
        deserialize(json.dumps(doc))


def test_hash_deterministic_and_key_order_free():
    g = all_kind_samples()[0]
    assert hash_genome(g) == hash_genome(g)
    doc = json.loads(serialize(g))
    reordered = {k: doc[k] for k in reversed(list(doc))}
    assert deserialize(json.dumps(reordered)) == g
    assert hash_genome(deserialize(json.dumps(reordered))) == hash_genome(g)


def test_identity_rebuild_same_hash():
    g = all_kind_samples()[1]
    rebuilt = ShapeGenome(g.root, g.individual_kind, g.constraints)
    assert hash_genome(rebuilt) == hash_genome(g)


def test_single_coordinate_change_changes_hash():
    rng = RngStream(2)
    g = random_genome(KIND_REALVECTOR, ((-5.0, 5.0),) * 6, rng)
    values = list(g.values)
    values[3] += 1e-9
    from dataclasses import replace

    assert hash_genome(replace(g, values=tuple(values))) != hash_genome(g)


# ---------------------------------------------------------------------------
# compatibility table
# ---------------------------------------------------------------------------

def test_compatibility_table():
    assert not compatible(KIND_SPACECRAFT, "antenna_proxy")
    assert compatible(KIND_REALVECTOR, "sphere")
    assert compatible(KIND_ANTENNA, "external")
    assert compatible(KIND_POINTCLOUD, "drag_proxy")
    assert not compatible(KIND_ANTENNA, "drag_proxy")
    assert not compatible(KIND_REALVECTOR, "antenna_proxy")


def test_tessellate_genome_kinds():
    samples = all_kind_samples()
    assert tessellate_genome(samples[0]) is not None
    cloud_mesh = tessellate_genome(samples[2])
    assert cloud_mesh is not None
    assert len(cloud_mesh.triangles) > 2
    assert tessellate_genome(samples[3]) is None
