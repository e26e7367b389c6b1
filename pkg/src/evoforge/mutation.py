"""Mutation, recombination, and random generation of genomes.

Every operator returns a new genome and leaves its inputs untouched.
Candidates that fail their kind's validity check are retried up to a
fixed budget; expensive simulator time is never spent on an invalid
design, so a birth is skipped entirely (MutationExhausted /
CrossoverFailure) rather than submitted broken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import geometry
from .geometry import Aabb, Primitive, Transform, quat_from_axis_angle, quat_mul, quat_normalize
from .genomes import (
    CONDUCTOR,
    FEED,
    FREE_SPACE,
    KIND_ANTENNA,
    KIND_POINTCLOUD,
    KIND_REALVECTOR,
    KIND_SHAPE,
    KIND_SPACECRAFT,
    MATERIALS,
    Genome,
    Panel,
    PointCloudConstraints,
    PointCloudGenome,
    RealVectorGenome,
    ShapeConstraints,
    ShapeGenome,
    ShapeNode,
    individual_type,
    validate,
)
from .rng import RngStream

MUTATION_ATTEMPTS = 25
CROSSOVER_ATTEMPTS = 25
GENERATION_ATTEMPTS = 100


class MutationExhausted(RuntimeError):
    """No valid mutant found within the retry budget; skip this birth."""


class CrossoverFailure(RuntimeError):
    """No valid recombinant found; caller falls back to mutation-only birth."""


class GenerationFailure(RuntimeError):
    """Random generation could not satisfy the constraints."""


@dataclass(frozen=True)
class MutationRates:
    """Per-operator probability weights and step sizes.

    Weights for operators that do not apply to the genome kind in use are
    ignored.  Step-size defaults are roughly 5% of a 12U envelope.
    """

    add_shape: float = 1.0
    remove_shape: float = 1.0
    resize: float = 2.0
    rotate: float = 2.0
    translate: float = 2.0
    mutate_material: float = 1.0
    perturb_vertex: float = 4.0
    add_vertex: float = 1.0
    remove_vertex: float = 1.0
    perturb_real: float = 1.0
    translation_sigma: float = 0.01
    rotation_sigma: float = 0.1
    resize_sigma: float = 0.10
    vertex_sigma: float = 0.005
    real_sigma: float = 0.1


_SHAPE_OPS = ("add_shape", "remove_shape", "resize", "rotate", "translate")
_ANTENNA_OPS = _SHAPE_OPS + ("mutate_material",)
_CLOUD_OPS = ("perturb_vertex", "add_vertex", "remove_vertex")


# ---------------------------------------------------------------------------
# tree helpers
# ---------------------------------------------------------------------------

def _node_paths(root: ShapeNode) -> list[tuple[int, ...]]:
    """Preorder paths; () addresses the root."""
    out: list[tuple[int, ...]] = []

    def walk(node: ShapeNode, path: tuple[int, ...]):
        out.append(path)
        for i, child in enumerate(node.children):
            walk(child, path + (i,))

    walk(root, ())
    return out


def _get_node(root: ShapeNode, path: tuple[int, ...]) -> ShapeNode:
    node = root
    for i in path:
        node = node.children[i]
    return node


def _replace_node(root: ShapeNode, path: tuple[int, ...], new: ShapeNode | None) -> ShapeNode:
    """Rebuild the path to put `new` at `path`; None deletes the subtree."""
    if not path:
        if new is None:
            raise ValueError("cannot delete the root node")
        return new
    i = path[0]
    children = list(root.children)
    if len(path) == 1 and new is None:
        del children[i]
    else:
        children[i] = _replace_node(children[i], path[1:], new)
    return replace(root, children=tuple(children))


def _inscribed_radius(p: Primitive) -> float:
    if p.kind == geometry.CUBOID:
        return min(p.params)
    if p.kind == geometry.CYLINDER:
        return min(p.params)
    return p.params[0]


def _random_primitive(rng: RngStream, scale: float, pose: Transform) -> Primitive:
    kind = rng.choice((geometry.CUBOID, geometry.CYLINDER, geometry.SPHERE))
    lo, hi = 0.3 * scale, 1.0 * scale
    if kind == geometry.CUBOID:
        params = (rng.uniform_in(lo, hi), rng.uniform_in(lo, hi), rng.uniform_in(lo, hi))
    elif kind == geometry.CYLINDER:
        params = (rng.uniform_in(lo, hi), rng.uniform_in(lo, hi))
    else:
        params = (rng.uniform_in(lo, hi),)
    return Primitive(kind, params, pose)


def _random_unit(rng: RngStream) -> tuple[float, float, float]:
    while True:
        v = (rng.normal(), rng.normal(), rng.normal())
        n = math.sqrt(sum(x * x for x in v))
        if n > 1e-12:
            return (v[0] / n, v[1] / n, v[2] / n)


# ---------------------------------------------------------------------------
# shape-tree operators
# ---------------------------------------------------------------------------

def _op_add_shape(genome: ShapeGenome, rates: MutationRates, rng: RngStream) -> ShapeGenome:
    paths = _node_paths(genome.root)
    path = paths[rng.randrange(len(paths))]
    parent = _get_node(genome.root, path)
    rho = _inscribed_radius(parent.primitive)
    d = _random_unit(rng)
    dist = rng.uniform_in(0.0, rho)  # child center inside the parent: contact guaranteed
    pose = Transform(
        geometry.random_rotation(rng), (d[0] * dist, d[1] * dist, d[2] * dist)
    )
    child_scale = rng.uniform_in(0.3, 0.9) * rho
    prim = _random_primitive(rng, max(child_scale, 1e-3), pose)
    if genome.individual_kind == KIND_ANTENNA:
        material = rng.choice((CONDUCTOR, FREE_SPACE))
    else:
        material = CONDUCTOR
    new_parent = replace(parent, children=parent.children + (ShapeNode(prim, material),))
    return replace(genome, root=_replace_node(genome.root, path, new_parent))


def _op_remove_shape(genome: ShapeGenome, rates: MutationRates, rng: RngStream) -> ShapeGenome:
    leaves = [p for p in _node_paths(genome.root) if p and not _get_node(genome.root, p).children]
    path = leaves[rng.randrange(len(leaves))]
    return replace(genome, root=_replace_node(genome.root, path, None))


def _perturb_primitive(node: ShapeNode, rates: MutationRates, rng: RngStream, what: str) -> ShapeNode:
    prim = node.primitive
    if what == "resize":
        params = tuple(p * math.exp(rng.normal(0.0, rates.resize_sigma)) for p in prim.params)
        prim = replace(prim, params=params)
    elif what == "rotate":
        dq = quat_from_axis_angle(_random_unit(rng), rng.normal(0.0, rates.rotation_sigma))
        pose = replace(prim.pose, rotation=quat_normalize(quat_mul(dq, prim.pose.rotation)))
        prim = replace(prim, pose=pose)
    else:  # translate
        t = prim.pose.translation
        pose = replace(
            prim.pose,
            translation=tuple(v + rng.normal(0.0, rates.translation_sigma) for v in t),
        )
        prim = replace(prim, pose=pose)
    return replace(node, primitive=prim)


def _op_perturb(what: str):
    def op(genome: ShapeGenome, rates: MutationRates, rng: RngStream) -> ShapeGenome:
        paths = _node_paths(genome.root)
        path = paths[rng.randrange(len(paths))]
        node = _get_node(genome.root, path)
        return replace(genome, root=_replace_node(genome.root, path, _perturb_primitive(node, rates, rng, what)))

    return op


def _op_mutate_material(genome: ShapeGenome, rates: MutationRates, rng: RngStream) -> ShapeGenome:
    paths = _node_paths(genome.root)
    path = paths[rng.randrange(len(paths))]
    node = _get_node(genome.root, path)
    material = MATERIALS[rng.randrange(len(MATERIALS))]
    return replace(genome, root=_replace_node(genome.root, path, replace(node, material=material)))


# ---------------------------------------------------------------------------
# point-cloud operators
# ---------------------------------------------------------------------------

def _clip_to_bounds(v: tuple[float, float, float], bounds: Aabb) -> tuple[float, float, float]:
    return tuple(min(max(x, lo), hi) for x, lo, hi in zip(v, bounds.min, bounds.max))


def _op_perturb_vertex(genome: PointCloudGenome, rates: MutationRates, rng: RngStream) -> PointCloudGenome:
    verts = list(genome.vertices)
    i = rng.randrange(len(verts))
    moved = tuple(x + rng.normal(0.0, rates.vertex_sigma) for x in verts[i])
    verts[i] = _clip_to_bounds(moved, genome.constraints.bounds)
    return replace(genome, vertices=tuple(verts))


def _op_add_vertex(genome: PointCloudGenome, rates: MutationRates, rng: RngStream) -> PointCloudGenome:
    b = genome.constraints.bounds
    v = tuple(rng.uniform_in(lo, hi) for lo, hi in zip(b.min, b.max))
    return replace(genome, vertices=genome.vertices + (v,))


def _op_remove_vertex(genome: PointCloudGenome, rates: MutationRates, rng: RngStream) -> PointCloudGenome:
    verts = list(genome.vertices)
    del verts[rng.randrange(len(verts))]
    return replace(genome, vertices=tuple(verts))


# ---------------------------------------------------------------------------
# real-vector operator
# ---------------------------------------------------------------------------

def _op_perturb_real(genome: RealVectorGenome, rates: MutationRates, rng: RngStream) -> RealVectorGenome:
    n = len(genome.values)
    values = list(genome.values)
    touched = False
    for i in range(n):
        if rng.uniform() < 1.0 / n:
            values[i] += rng.normal(0.0, rates.real_sigma)
            touched = True
    if not touched:
        i = rng.randrange(n)
        values[i] += rng.normal(0.0, rates.real_sigma)
    values = [min(max(v, lo), hi) for v, (lo, hi) in zip(values, genome.bounds)]
    return replace(genome, values=tuple(values))


# ---------------------------------------------------------------------------
# operator selection and the mutate entry point
# ---------------------------------------------------------------------------

def _applicable_ops(genome: Genome, rates: MutationRates) -> tuple[list[str], list[float]]:
    kind = individual_type(genome)
    if kind == KIND_REALVECTOR:
        ops = ["perturb_real"]
    elif kind == KIND_POINTCLOUD:
        ops = list(_CLOUD_OPS)
        if len(genome.vertices) >= genome.constraints.max_vertices:
            ops.remove("add_vertex")
        if len(genome.vertices) <= 4:
            ops.remove("remove_vertex")
    else:
        ops = list(_ANTENNA_OPS if kind == KIND_ANTENNA else _SHAPE_OPS)
        n_nodes = genome.root.count()
        if n_nodes >= genome.constraints.max_nodes:
            ops.remove("add_shape")
        if n_nodes <= 1:
            ops.remove("remove_shape")
    weights = [getattr(rates, op) for op in ops]
    keep = [(o, w) for o, w in zip(ops, weights) if w > 0.0]
    return [o for o, _ in keep], [w for _, w in keep]


_OPERATORS = {
    "add_shape": _op_add_shape,
    "remove_shape": _op_remove_shape,
    "resize": _op_perturb("resize"),
    "rotate": _op_perturb("rotate"),
    "translate": _op_perturb("translate"),
    "mutate_material": _op_mutate_material,
    "perturb_vertex": _op_perturb_vertex,
    "add_vertex": _op_add_vertex,
    "remove_vertex": _op_remove_vertex,
    "perturb_real": _op_perturb_real,
}


def mutate(genome: Genome, rates: MutationRates, rng: RngStream) -> Genome:
    """Apply exactly one weighted operator; retry until the result is valid.

    Operators that cannot fire in the current state (add at capacity,
    remove at the floor) are excluded from the draw.  Raises
    MutationExhausted after MUTATION_ATTEMPTS failed candidates.
    """
    for _ in range(MUTATION_ATTEMPTS):
        ops, weights = _applicable_ops(genome, rates)
        if not ops:
            break
        op = ops[rng.weighted_index(weights)]
        candidate = _OPERATORS[op](genome, rates, rng)
        if validate(candidate):
            return candidate
    raise MutationExhausted(f"no valid mutant within {MUTATION_ATTEMPTS} attempts")


# ---------------------------------------------------------------------------
# crossover
# ---------------------------------------------------------------------------

def crossover(a: Genome, b: Genome, rng: RngStream) -> Genome:
    """Kind-appropriate recombination of two parents of the same kind."""
    if individual_type(a) != individual_type(b):
        raise ValueError("crossover requires parents of the same kind")
    kind = individual_type(a)
    if kind == KIND_REALVECTOR:
        values = tuple(
            av if rng.uniform() < 0.5 else bv for av, bv in zip(a.values, b.values)
        )
        return replace(a, values=values)
    for _ in range(CROSSOVER_ATTEMPTS):
        if kind == KIND_POINTCLOUD:
            candidate = _cloud_crossover(a, b, rng)
        else:
            candidate = _tree_crossover(a, b, rng)
        if candidate is not None and validate(candidate):
            return candidate
    raise CrossoverFailure(f"no valid recombinant within {CROSSOVER_ATTEMPTS} attempts")


def _tree_crossover(a: ShapeGenome, b: ShapeGenome, rng: RngStream) -> ShapeGenome:
    """Swap a random subtree of a for a random subtree of b; the graft keeps
    its pose relative to its new parent."""
    path_a = rng.choice(_node_paths(a.root))
    subtree_b = _get_node(b.root, rng.choice(_node_paths(b.root)))
    return replace(a, root=_replace_node(a.root, path_a, subtree_b))


def _cloud_crossover(a: PointCloudGenome, b: PointCloudGenome, rng: RngStream) -> PointCloudGenome | None:
    normal = np.asarray(_random_unit(rng))
    av = np.asarray(a.vertices)
    bv = np.asarray(b.vertices)
    mid = np.concatenate([av, bv]).mean(axis=0)
    keep_a = av[(av - mid) @ normal >= 0.0]
    keep_b = bv[(bv - mid) @ normal < 0.0]
    merged = np.concatenate([keep_a, keep_b])
    if len(merged) < 4 or len(merged) > a.constraints.max_vertices:
        return None
    return replace(a, vertices=tuple(tuple(float(x) for x in v) for v in merged))


# ---------------------------------------------------------------------------
# random generation
# ---------------------------------------------------------------------------

def default_shape_constraints(kind: str) -> ShapeConstraints:
    if kind == KIND_SPACECRAFT:
        # 12U envelope (nominal 1U = 0.10 m cube), half a 1U of cargo
        return ShapeConstraints(
            bounds=Aabb((-0.10, -0.10, -0.15), (0.10, 0.10, 0.15)),
            max_nodes=12,
            min_cargo_volume=0.006,
        )
    if kind == KIND_ANTENNA:
        return ShapeConstraints(
            bounds=Aabb((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5)), max_nodes=12, max_feeds=1
        )
    return ShapeConstraints(bounds=Aabb((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5)), max_nodes=12)


def default_pointcloud_constraints() -> PointCloudConstraints:
    # 12U envelope, fixed cargo box, two fixed solar panels on the +/-y faces
    return PointCloudConstraints(
        bounds=Aabb((-0.10, -0.10, -0.15), (0.10, 0.10, 0.15)),
        cargo=Aabb((-0.05, -0.05, -0.075), (0.05, 0.05, 0.075)),
        panels=(
            Panel(center=(0.0, 0.10, 0.0), normal=(0.0, 1.0, 0.0), width=0.3, height=0.2),
            Panel(center=(0.0, -0.10, 0.0), normal=(0.0, -1.0, 0.0), width=0.3, height=0.2),
        ),
        max_vertices=32,
    )


def _random_generic_shape(constraints: ShapeConstraints, rng: RngStream) -> ShapeGenome:
    b = constraints.bounds
    span = min(hi - lo for lo, hi in zip(b.min, b.max))
    root_prim = _random_primitive(rng, span * 0.2, Transform())
    root = ShapeNode(root_prim, CONDUCTOR)
    genome = ShapeGenome(root, KIND_SHAPE, constraints)
    for _ in range(rng.randrange(4)):
        genome = _op_add_shape(genome, MutationRates(), rng)
    return genome


def _random_spacecraft(constraints: ShapeConstraints, rng: RngStream) -> ShapeGenome:
    b = constraints.bounds
    half = [(hi - lo) / 2.0 for lo, hi in zip(b.min, b.max)]
    params = tuple(rng.uniform_in(0.70 * h, 0.9999 * h) for h in half)
    root = ShapeNode(Primitive(geometry.CUBOID, params, Transform()), CONDUCTOR)
    genome = ShapeGenome(root, KIND_SPACECRAFT, constraints)
    for _ in range(rng.randrange(4)):
        genome = _op_add_shape(genome, MutationRates(), rng)
    return genome


def _random_antenna(constraints: ShapeConstraints, rng: RngStream) -> ShapeGenome:
    # canonical dipole: rod, feed bridging, second rod; slight embedding so
    # contacts are robust overlaps rather than exact tangencies
    embed = 0.002
    rod_len = rng.uniform_in(0.05, 0.2)
    rod_r = rng.uniform_in(0.005, 0.02)
    gap = rng.uniform_in(0.006, 0.02)
    feed_r = rod_r * rng.uniform_in(0.5, 0.9)
    rod_b_len = rng.uniform_in(0.05, 0.2)
    rod_b = ShapeNode(
        Primitive(
            geometry.CYLINDER,
            (rod_r, rod_b_len),
            Transform(translation=(0.0, 0.0, gap + rod_b_len - embed)),
        ),
        CONDUCTOR,
    )
    feed = ShapeNode(
        Primitive(
            geometry.CYLINDER,
            (feed_r, gap),
            Transform(translation=(0.0, 0.0, rod_len + gap - embed)),
        ),
        FEED,
        children=(rod_b,),
    )
    pose = Transform(
        geometry.random_rotation(rng),
        tuple(rng.uniform_in(0.4 * lo, 0.4 * hi) for lo, hi in zip(constraints.bounds.min, constraints.bounds.max)),
    )
    root = ShapeNode(Primitive(geometry.CYLINDER, (rod_r, rod_len), pose), CONDUCTOR, children=(feed,))
    genome = ShapeGenome(root, KIND_ANTENNA, constraints)
    if rng.uniform() < 0.5:
        genome = _op_add_shape(genome, MutationRates(), rng)
    return genome


def _random_pointcloud(constraints: PointCloudConstraints, rng: RngStream) -> PointCloudGenome:
    cargo, bounds = constraints.cargo, constraints.bounds
    verts = []
    for corner in cargo.corners():
        v = []
        for x, lo, hi, clo in zip(corner, bounds.min, bounds.max, cargo.min):
            frac = rng.uniform_in(0.05, 1.0)  # strictly outward: keep corners off the hull boundary
            if x <= clo:
                v.append(x - frac * (x - lo))
            else:
                v.append(x + frac * (hi - x))
        verts.append(tuple(v))
    for _ in range(rng.randrange(9)):
        verts.append(tuple(rng.uniform_in(lo, hi) for lo, hi in zip(bounds.min, bounds.max)))
    return PointCloudGenome(vertices=tuple(verts), constraints=constraints)


def random_genome(kind: str, space, rng: RngStream) -> Genome:
    """Fresh random genome satisfying its kind's validity checks.

    `space` is the kind's constraint object: ShapeConstraints for tree
    kinds, PointCloudConstraints for clouds, a ((lo, hi), ...) bounds
    tuple for real vectors.
    """
    if kind == KIND_REALVECTOR:
        values = tuple(rng.uniform_in(lo, hi) for lo, hi in space)
        return RealVectorGenome(values=values, bounds=tuple(space))
    makers = {
        KIND_SHAPE: _random_generic_shape,
        KIND_SPACECRAFT: _random_spacecraft,
        KIND_ANTENNA: _random_antenna,
        KIND_POINTCLOUD: _random_pointcloud,
    }
    if kind not in makers:
        raise ValueError(f"unknown individual kind {kind!r}")
    for _ in range(GENERATION_ATTEMPTS):
        genome = makers[kind](space, rng)
        if validate(genome):
            return genome
    raise GenerationFailure(
        f"no valid random {kind} genome within {GENERATION_ATTEMPTS} attempts"
    )
