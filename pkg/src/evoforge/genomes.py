"""Genome representations, validity checks, and serialization.

Four families share one interface the evolvers treat uniformly:

* shape trees (generic / antenna / spacecraft) built from posed
  primitives, each child posed relative to its parent and required to
  touch it;
* point clouds whose convex hull is the craft surface, with a fixed
  internal cargo box and fixed solar panels;
* real vectors, used with the analytic benchmark evaluators.

All genomes are immutable values; operators elsewhere return new
genomes.  Serialization is JSON with a version tag; floats survive a
round trip bit-identically (shortest round-trip decimal encoding).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import geometry
from .geometry import (
    Aabb,
    Primitive,
    Transform,
    compose,
    primitives_overlap,
    within_bounds,
)
from .rng import RngStream, stable_hash64

GENOME_DOC_VERSION = 1

CONDUCTOR = "conductor"
FREE_SPACE = "free_space"
FEED = "feed"
MATERIALS = (CONDUCTOR, FREE_SPACE, FEED)

KIND_SHAPE = "shape"
KIND_ANTENNA = "antenna"
KIND_SPACECRAFT = "spacecraft"
KIND_POINTCLOUD = "pointcloud"
KIND_REALVECTOR = "realvector"

SHAPE_KINDS = (KIND_SHAPE, KIND_ANTENNA, KIND_SPACECRAFT)
ALL_KINDS = SHAPE_KINDS + (KIND_POINTCLOUD, KIND_REALVECTOR)


class DeserializeError(ValueError):
    """Malformed genome document; the message carries a location path."""


class VersionError(DeserializeError):
    """Genome document with an unsupported version tag."""


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeNode:
    """Tree-assembly unit: a posed primitive plus its children.

    The primitive's pose is expressed in the parent node's frame; every
    non-root node must touch or overlap its parent.
    """

    primitive: Primitive
    material: str = CONDUCTOR
    children: tuple["ShapeNode", ...] = ()

    def __post_init__(self):
        if self.material not in MATERIALS:
            raise ValueError(f"unknown material {self.material!r}")

    def count(self) -> int:
        return 1 + sum(c.count() for c in self.children)


@dataclass(frozen=True)
class ShapeConstraints:
    bounds: Aabb
    max_nodes: int = 12
    min_cargo_volume: float = 0.0
    max_feeds: int = 1


@dataclass(frozen=True)
class ShapeGenome:
    root: ShapeNode
    individual_kind: str  # shape | antenna | spacecraft
    constraints: ShapeConstraints

    def __post_init__(self):
        if self.individual_kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape genome kind {self.individual_kind!r}")


@dataclass(frozen=True)
class Panel:
    """Fixed rectangular plate (solar panel): immune to mutation, present
    in drag projection."""

    center: tuple[float, float, float]
    normal: tuple[float, float, float]
    width: float
    height: float

    def corners(self) -> np.ndarray:
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        helper = np.zeros(3)
        helper[int(np.argmin(np.abs(n)))] = 1.0
        u = np.cross(n, helper)
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        c = np.asarray(self.center, dtype=float)
        hw, hh = self.width / 2.0, self.height / 2.0
        return np.array([c + su * hw * u + sv * hh * v for su, sv in
                         ((-1, -1), (1, -1), (1, 1), (-1, 1))])


@dataclass(frozen=True)
class PointCloudConstraints:
    bounds: Aabb
    cargo: Aabb
    panels: tuple[Panel, ...] = ()
    max_vertices: int = 32


@dataclass(frozen=True)
class PointCloudGenome:
    vertices: tuple[tuple[float, float, float], ...]
    constraints: PointCloudConstraints


@dataclass(frozen=True)
class RealVectorGenome:
    values: tuple[float, ...]
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.values) != len(self.bounds):
            raise ValueError("values and bounds must have equal length")


Genome = Union[ShapeGenome, PointCloudGenome, RealVectorGenome]


def individual_type(genome: Genome) -> str:
    if isinstance(genome, ShapeGenome):
        return genome.individual_kind
    if isinstance(genome, PointCloudGenome):
        return KIND_POINTCLOUD
    return KIND_REALVECTOR


# ---------------------------------------------------------------------------
# world-frame flattening
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WorldNode:
    index: int
    parent_index: int  # -1 for root
    material: str
    primitive: Primitive  # pose in the world frame


def flatten_tree(genome: ShapeGenome) -> tuple[WorldNode, ...]:
    """Preorder list of nodes with poses composed into the world frame."""
    out: list[WorldNode] = []

    def walk(node: ShapeNode, parent_world: Transform, parent_index: int):
        world = compose(parent_world, node.primitive.pose)
        idx = len(out)
        out.append(
            WorldNode(idx, parent_index, node.material, replace(node.primitive, pose=world))
        )
        for child in node.children:
            walk(child, world, idx)

    walk(genome.root, geometry.IDENTITY, -1)
    return tuple(out)


def world_primitives(genome: ShapeGenome, exclude_materials: tuple[str, ...] = ()) -> list[Primitive]:
    return [
        n.primitive for n in flatten_tree(genome) if n.material not in exclude_materials
    ]


def solid_primitives(genome: ShapeGenome) -> list[Primitive]:
    """Shapes that matter aerodynamically: free space is absent air."""
    return world_primitives(genome, exclude_materials=(FREE_SPACE,))


# ---------------------------------------------------------------------------
# validity
# ---------------------------------------------------------------------------

VALID = "valid"

NO_FEED = "NoFeed"
MULTIPLE_FEEDS = "MultipleFeeds"
FEED_UNTERMINATED = "FeedUnterminated"
SHORT = "Short"
OUT_OF_BOUNDS = "OutOfBounds"
INSUFFICIENT_CARGO = "InsufficientCargo"
BROKEN_TREE = "BrokenTree"
TOO_MANY_NODES = "TooManyNodes"
BAD_VERTEX_COUNT = "BadVertexCount"


@dataclass(frozen=True)
class Validity:
    ok: bool
    reason: str = VALID

    def __bool__(self) -> bool:
        return self.ok


VALID_RESULT = Validity(True)


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def conductor_components(nodes: tuple[WorldNode, ...]) -> dict[int, int]:
    """Map conductor node index -> component id (feed and air excluded)."""
    conductors = [n for n in nodes if n.material == CONDUCTOR]
    uf = UnionFind(len(conductors))
    for i in range(len(conductors)):
        for j in range(i + 1, len(conductors)):
            if primitives_overlap(conductors[i].primitive, conductors[j].primitive):
                uf.union(i, j)
    return {n.index: uf.find(i) for i, n in enumerate(conductors)}


def _check_tree_structure(genome: ShapeGenome) -> Validity:
    nodes = flatten_tree(genome)
    if len(nodes) > genome.constraints.max_nodes:
        return Validity(False, TOO_MANY_NODES)
    by_index = {n.index: n for n in nodes}
    for n in nodes:
        if n.parent_index < 0:
            continue
        if not primitives_overlap(n.primitive, by_index[n.parent_index].primitive):
            return Validity(False, BROKEN_TREE)
    return VALID_RESULT


def validate_antenna(genome: ShapeGenome) -> Validity:
    """Feed topology and shorting rules.

    Valid iff there is exactly one feed (up to max_feeds), the feed
    bridges at least two conductor pieces that belong to distinct
    conductive components (a conductive path around the feed is an
    electrical short), and everything fits the bounding box.
    """
    structural = _check_tree_structure(genome)
    if not structural:
        return structural
    nodes = flatten_tree(genome)
    feeds = [n for n in nodes if n.material == FEED]
    if len(feeds) == 0:
        return Validity(False, NO_FEED)
    if len(feeds) > genome.constraints.max_feeds:
        return Validity(False, MULTIPLE_FEEDS)
    comp = conductor_components(nodes)
    conductors = [n for n in nodes if n.material == CONDUCTOR]
    for feed in feeds:
        touched = [
            n.index for n in conductors if primitives_overlap(feed.primitive, n.primitive)
        ]
        if len(touched) < 2:
            return Validity(False, FEED_UNTERMINATED)
        if len({comp[i] for i in touched}) < 2:
            return Validity(False, SHORT)
    if not within_bounds([n.primitive for n in nodes], genome.constraints.bounds):
        return Validity(False, OUT_OF_BOUNDS)
    return VALID_RESULT


CARGO_VOLUME_SAMPLES = 100_000
_VOLUME_SEED = 0xCA560


@lru_cache(maxsize=8192)
def union_volume(genome: ShapeGenome) -> float:
    """Monte Carlo union volume of the solid shapes, deterministic per genome.

    The sampling stream is keyed to the genome's hash, so the same genome
    always yields the same estimate regardless of evaluation order, and
    the validity check and the reported metric agree exactly.
    """
    shapes = solid_primitives(genome)
    if not shapes:
        return 0.0
    rng = RngStream(_VOLUME_SEED, stream_id=hash_genome(genome))
    return geometry.monte_carlo_volume(shapes, CARGO_VOLUME_SAMPLES, rng)


def point_cloud_hull(genome: PointCloudGenome) -> ConvexHull:
    return ConvexHull(np.asarray(genome.vertices, dtype=float))


def hull_contains_box(hull: ConvexHull, box: Aabb, tol: float = 1e-9) -> bool:
    eqs = hull.equations  # A x + b <= 0 inside
    pts = np.asarray(box.corners(), dtype=float)
    return bool(np.all(pts @ eqs[:, :3].T + eqs[:, 3] <= tol))


def validate_spacecraft(genome: Union[ShapeGenome, PointCloudGenome]) -> Validity:
    """Bounding-box fit plus cargo capacity.

    Shape genomes must enclose at least min_cargo_volume of material
    (Monte Carlo union volume); point clouds must keep the fixed cargo
    box inside their convex hull.
    """
    if isinstance(genome, PointCloudGenome):
        cons = genome.constraints
        if not (4 <= len(genome.vertices) <= cons.max_vertices):
            return Validity(False, BAD_VERTEX_COUNT)
        lo, hi = np.asarray(cons.bounds.min), np.asarray(cons.bounds.max)
        verts = np.asarray(genome.vertices, dtype=float)
        if not (np.all(verts >= lo - 1e-9) and np.all(verts <= hi + 1e-9)):
            return Validity(False, OUT_OF_BOUNDS)
        try:
            hull = point_cloud_hull(genome)
        except QhullError:
            return Validity(False, INSUFFICIENT_CARGO)  # degenerate (flat) cloud
        if not hull_contains_box(hull, cons.cargo):
            return Validity(False, INSUFFICIENT_CARGO)
        return VALID_RESULT
    structural = _check_tree_structure(genome)
    if not structural:
        return structural
    shapes = [n.primitive for n in flatten_tree(genome)]
    if not within_bounds(shapes, genome.constraints.bounds):
        return Validity(False, OUT_OF_BOUNDS)
    if union_volume(genome) < genome.constraints.min_cargo_volume:
        return Validity(False, INSUFFICIENT_CARGO)
    return VALID_RESULT


def validate_realvector(genome: RealVectorGenome) -> Validity:
    for v, (lo, hi) in zip(genome.values, genome.bounds):
        if not (lo <= v <= hi) or not math.isfinite(v):
            return Validity(False, OUT_OF_BOUNDS)
    return VALID_RESULT


def validate(genome: Genome) -> Validity:
    """Kind-appropriate validity check."""
    kind = individual_type(genome)
    if kind == KIND_ANTENNA:
        return validate_antenna(genome)
    if kind in (KIND_SPACECRAFT, KIND_POINTCLOUD):
        return validate_spacecraft(genome)
    if kind == KIND_REALVECTOR:
        return validate_realvector(genome)
    structural = _check_tree_structure(genome)
    if not structural:
        return structural
    shapes = [n.primitive for n in flatten_tree(genome)]
    if not within_bounds(shapes, genome.constraints.bounds):
        return Validity(False, OUT_OF_BOUNDS)
    return VALID_RESULT


# ---------------------------------------------------------------------------
# compatibility
# ---------------------------------------------------------------------------

_COMPAT = {
    KIND_SHAPE: {"external", "mock"},
    KIND_ANTENNA: {"antenna_proxy", "external", "mock"},
    KIND_SPACECRAFT: {"drag_proxy", "external", "mock"},
    KIND_POINTCLOUD: {"drag_proxy", "external", "mock"},
    KIND_REALVECTOR: {"sphere", "rastrigin", "external", "mock"},
}


def compatible(individual_kind: str, evaluator_kind: str) -> bool:
    """Static pairing table: an evaluator must understand the genome it gets."""
    return evaluator_kind in _COMPAT.get(individual_kind, set())


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _transform_doc(t: Transform) -> dict:
    return {"rotation": list(t.rotation), "translation": list(t.translation)}


def _primitive_doc(p: Primitive) -> dict:
    return {"kind": p.kind, "params": list(p.params), "pose": _transform_doc(p.pose)}


def _node_doc(n: ShapeNode) -> dict:
    return {
        "primitive": _primitive_doc(n.primitive),
        "material": n.material,
        "children": [_node_doc(c) for c in n.children],
    }


def _aabb_doc(b: Aabb) -> dict:
    return {"min": list(b.min), "max": list(b.max)}


def serialize(genome: Genome) -> str:
    """Genome document: JSON with version / type / payload."""
    kind = individual_type(genome)
    if isinstance(genome, ShapeGenome):
        payload = {
            "constraints": {
                "bounds": _aabb_doc(genome.constraints.bounds),
                "max_nodes": genome.constraints.max_nodes,
                "min_cargo_volume": genome.constraints.min_cargo_volume,
                "max_feeds": genome.constraints.max_feeds,
            },
            "root": _node_doc(genome.root),
        }
    elif isinstance(genome, PointCloudGenome):
        payload = {
            "constraints": {
                "bounds": _aabb_doc(genome.constraints.bounds),
                "cargo": _aabb_doc(genome.constraints.cargo),
                "panels": [
                    {
                        "center": list(p.center),
                        "normal": list(p.normal),
                        "width": p.width,
                        "height": p.height,
                    }
                    for p in genome.constraints.panels
                ],
                "max_vertices": genome.constraints.max_vertices,
            },
            "vertices": [list(v) for v in genome.vertices],
        }
    else:
        payload = {
            "values": list(genome.values),
            "bounds": [list(b) for b in genome.bounds],
        }
    return json.dumps(
        {"version": GENOME_DOC_VERSION, "type": kind, "payload": payload}
    )


def _need(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise DeserializeError(f"{where}: missing key {key!r}")
    return obj[key]


def _vec3(x, where: str) -> tuple[float, float, float]:
    if not isinstance(x, list) or len(x) != 3:
        raise DeserializeError(f"{where}: expected a 3-float list")
    return tuple(float(v) for v in x)


def _parse_transform(doc, where: str) -> Transform:
    rot = _need(doc, "rotation", where)
    if not isinstance(rot, list) or len(rot) != 4:
        raise DeserializeError(f"{where}.rotation: expected a 4-float quaternion")
    try:
        return Transform(tuple(float(v) for v in rot), _vec3(doc["translation"], where + ".translation"))
    except ValueError as e:
        raise DeserializeError(f"{where}: {e}") from e


def _parse_primitive(doc, where: str) -> Primitive:
    kind = _need(doc, "kind", where)
    params = _need(doc, "params", where)
    pose = _parse_transform(_need(doc, "pose", where), where + ".pose")
    try:
        return Primitive(kind, tuple(float(v) for v in params), pose)
    except (ValueError, TypeError) as e:
        raise DeserializeError(f"{where}: {e}") from e


def _parse_node(doc, where: str) -> ShapeNode:
    material = _need(doc, "material", where)
    if material not in MATERIALS:
        raise DeserializeError(f"{where}.material: unknown material {material!r}")
    children = _need(doc, "children", where)
    if not isinstance(children, list):
        raise DeserializeError(f"{where}.children: expected a list")
    return ShapeNode(
        primitive=_parse_primitive(_need(doc, "primitive", where), where + ".primitive"),
        material=material,
        children=tuple(
            _parse_node(c, f"{where}.children[{i}]") for i, c in enumerate(children)
        ),
    )


def _parse_aabb(doc, where: str) -> Aabb:
    try:
        return Aabb(_vec3(_need(doc, "min", where), where + ".min"),
                    _vec3(_need(doc, "max", where), where + ".max"))
    except ValueError as e:
        raise DeserializeError(f"{where}: {e}") from e


def deserialize(document: str) -> Genome:
    """Inverse of serialize(); raises DeserializeError / VersionError."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise DeserializeError(f"invalid JSON: {e}") from e
    version = _need(doc, "version", "$")
    if version != GENOME_DOC_VERSION:
        raise VersionError(f"$.version: unsupported version {version!r}")
    kind = _need(doc, "type", "$")
    payload = _need(doc, "payload", "$")
    if kind in SHAPE_KINDS:
        cons_doc = _need(payload, "constraints", "$.payload")
        cons = ShapeConstraints(
            bounds=_parse_aabb(_need(cons_doc, "bounds", "$.payload.constraints"), "$.payload.constraints.bounds"),
            max_nodes=int(cons_doc.get("max_nodes", 12)),
            min_cargo_volume=float(cons_doc.get("min_cargo_volume", 0.0)),
            max_feeds=int(cons_doc.get("max_feeds", 1)),
        )
        root = _parse_node(_need(payload, "root", "$.payload"), "$.payload.root")
        return ShapeGenome(root=root, individual_kind=kind, constraints=cons)
    if kind == KIND_POINTCLOUD:
        cons_doc = _need(payload, "constraints", "$.payload")
        panels = []
        for i, p in enumerate(cons_doc.get("panels", [])):
            where = f"$.payload.constraints.panels[{i}]"
            panels.append(
                Panel(
                    center=_vec3(_need(p, "center", where), where + ".center"),
                    normal=_vec3(_need(p, "normal", where), where + ".normal"),
                    width=float(_need(p, "width", where)),
                    height=float(_need(p, "height", where)),
                )
            )
        cons = PointCloudConstraints(
            bounds=_parse_aabb(_need(cons_doc, "bounds", "$.payload.constraints"), "$.payload.constraints.bounds"),
            cargo=_parse_aabb(_need(cons_doc, "cargo", "$.payload.constraints"), "$.payload.constraints.cargo"),
            panels=tuple(panels),
            max_vertices=int(cons_doc.get("max_vertices", 32)),
        )
        verts = _need(payload, "vertices", "$.payload")
        if not isinstance(verts, list):
            raise DeserializeError("$.payload.vertices: expected a list")
        return PointCloudGenome(
            vertices=tuple(_vec3(v, f"$.payload.vertices[{i}]") for i, v in enumerate(verts)),
            constraints=cons,
        )
    if kind == KIND_REALVECTOR:
        values = _need(payload, "values", "$.payload")
        bounds = _need(payload, "bounds", "$.payload")
        if not isinstance(values, list) or not isinstance(bounds, list):
            raise DeserializeError("$.payload: values and bounds must be lists")
        try:
            return RealVectorGenome(
                values=tuple(float(v) for v in values),
                bounds=tuple((float(lo), float(hi)) for lo, hi in bounds),
            )
        except (ValueError, TypeError) as e:
            raise DeserializeError(f"$.payload: {e}") from e
    raise DeserializeError(f"$.type: unknown individual type {kind!r}")


def hash_genome(genome: Genome) -> int:
    """64-bit identity over the canonical serialization (key-order free)."""
    canonical = json.dumps(json.loads(serialize(genome)), sort_keys=True, separators=(",", ":"))
    return stable_hash64(canonical)


# ---------------------------------------------------------------------------
# meshing
# ---------------------------------------------------------------------------

def tessellate_genome(genome: Genome) -> geometry.TriangleMesh | None:
    """Triangle mesh of a geometric genome; None for real vectors.

    Shape trees tessellate every node (material info travels in the genome
    document, not the mesh); point clouds tessellate their convex hull plus
    the fixed panels as triangle pairs.
    """
    if isinstance(genome, ShapeGenome):
        return geometry.tessellate(world_primitives(genome))
    if isinstance(genome, PointCloudGenome):
        verts = [tuple(float(x) for x in v) for v in genome.vertices]
        try:
            hull = point_cloud_hull(genome)
            tris = [tuple(int(i) for i in simplex) for simplex in hull.simplices]
        except QhullError:
            tris = []
        for panel in genome.constraints.panels:
            base = len(verts)
            verts.extend(tuple(float(x) for x in c) for c in panel.corners())
            tris.append((base, base + 1, base + 2))
            tris.append((base, base + 2, base + 3))
        return geometry.TriangleMesh(tuple(verts), tuple(tris))
    return None
