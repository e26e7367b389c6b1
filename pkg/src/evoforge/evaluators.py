"""Evaluators: turn genomes into metric maps, possibly by driving an
external simulator process, plus the asynchronous evaluation manager.

The manager hides all parallelism from the evolver: submit() returns
immediately, next_completed() drains results in completion order, and
every submitted job yields exactly one result (ok, invalid, error, or
timeout): no loss, no duplication.
"""

from __future__ import annotations

import json
import math
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from queue import Empty, Queue

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import geometry
from .genomes import (
    CONDUCTOR,
    FEED,
    Genome,
    PointCloudGenome,
    RealVectorGenome,
    ShapeGenome,
    compatible,
    conductor_components,
    flatten_tree,
    hash_genome,
    individual_type,
    point_cloud_hull,
    serialize,
    solid_primitives,
    tessellate_genome,
    union_volume,
)
from .rng import RngStream, word_at

DEFAULT_TIMEOUT_S = 3600.0
DRAG_GRID_RESOLUTION = 512
METRIC_VOLUME_SEED = 0xA47E44A


class CapacityExceeded(RuntimeError):
    """submit() called while the in-flight set is full."""


class IncompatiblePairing(TypeError):
    """This evaluator cannot interpret that genome kind."""


class NothingPending(RuntimeError):
    """Blocking next_completed() with no jobs in flight."""


@dataclass(frozen=True)
class EvalJob:
    job_id: str  # 16 lowercase hex chars, unique within a run
    genome: Genome
    submitted_at_eval_index: int
    rng: RngStream  # job-private stream, keyed to the job id


@dataclass(frozen=True)
class EvalResult:
    job_id: str
    status: str  # ok | invalid | error | timeout
    metrics: dict[str, float] = field(default_factory=dict)
    duration_s: float = 0.0
    message: str = ""

    def __post_init__(self):
        if self.status not in ("ok", "invalid", "error", "timeout"):
            raise ValueError(f"unknown result status {self.status!r}")
        if self.status == "ok":
            if not self.metrics:
                raise ValueError("ok result requires non-empty metrics")
            for k, v in self.metrics.items():
                if not math.isfinite(v):
                    raise ValueError(f"metric {k!r} is not finite: {v!r}")


# ---------------------------------------------------------------------------
# built-in evaluators
# ---------------------------------------------------------------------------

def eval_sphere(values) -> dict[str, float]:
    return {"f": float(sum(v * v for v in values))}


def eval_rastrigin(values) -> dict[str, float]:
    n = len(values)
    return {
        "f": float(
            10.0 * n + sum(v * v - 10.0 * math.cos(2.0 * math.pi * v) for v in values)
        )
    }


class Evaluator:
    """Base: subclasses compute metrics; the manager handles timing/errors."""

    kind: str = "abstract"

    def run(self, job: EvalJob) -> EvalResult:
        metrics = self.metrics(job)
        return EvalResult(job.job_id, "ok", metrics)

    def metrics(self, job: EvalJob) -> dict[str, float]:
        raise NotImplementedError


class SphereEvaluator(Evaluator):
    kind = "sphere"

    def metrics(self, job: EvalJob) -> dict[str, float]:
        return eval_sphere(job.genome.values)


class RastriginEvaluator(Evaluator):
    kind = "rastrigin"

    def metrics(self, job: EvalJob) -> dict[str, float]:
        return eval_rastrigin(job.genome.values)


def _pointcloud_silhouette(genome: PointCloudGenome, direction, grid: int) -> float:
    u, v, w = geometry.projection_basis(direction)
    polygons = []
    verts = np.asarray(genome.vertices, dtype=float)
    flat = np.stack([verts @ u, verts @ v], axis=1)
    try:
        hull2d = ConvexHull(flat)
        polygons.append(flat[hull2d.vertices])
    except QhullError:
        pass  # edge-on degenerate projection contributes no area
    for panel in genome.constraints.panels:
        corners = panel.corners()
        poly = np.stack([corners @ u, corners @ v], axis=1)
        polygons.append(poly)
    return geometry.convex_polygon_grid_area(polygons, grid)


class DragProxyEvaluator(Evaluator):
    """Desk-scale drag stand-in: silhouette area normal to the flow, plus
    the cargo volume the validity check established."""

    kind = "drag_proxy"

    def __init__(self, velocity_direction=(0.0, 0.0, 1.0), dynamic_pressure_scale: float = 1.0,
                 grid_resolution: int = DRAG_GRID_RESOLUTION):
        d = np.asarray(velocity_direction, dtype=float)
        n = float(np.linalg.norm(d))
        if n == 0.0:
            raise geometry.DegenerateDirection("zero velocity direction")
        self.velocity_direction = tuple(d / n)
        self.dynamic_pressure_scale = float(dynamic_pressure_scale)
        self.grid_resolution = int(grid_resolution)

    def metrics(self, job: EvalJob) -> dict[str, float]:
        genome = job.genome
        if isinstance(genome, PointCloudGenome):
            area = _pointcloud_silhouette(genome, self.velocity_direction, self.grid_resolution)
            hull = point_cloud_hull(genome)
            cargo = float(hull.volume)
        else:
            area = geometry.projected_area(
                solid_primitives(genome), self.velocity_direction, self.grid_resolution
            )
            cargo = union_volume(genome)
        return {
            "projected_area_m2": area,
            "cargo_volume_m3": cargo,
            "drag_n": self.dynamic_pressure_scale * area,
        }


class AntennaProxyEvaluator(Evaluator):
    """Desk-scale electromagnetic stand-in: how close the driven conductor
    structure's z-extent is to a target length."""

    kind = "antenna_proxy"

    def __init__(self, target_length_m: float = 0.5):
        self.target_length_m = float(target_length_m)

    def metrics(self, job: EvalJob) -> dict[str, float]:
        genome: ShapeGenome = job.genome
        nodes = flatten_tree(genome)
        comp = conductor_components(nodes)
        feeds = [n for n in nodes if n.material == FEED]
        driven_components = set()
        conductors = [n for n in nodes if n.material == CONDUCTOR]
        for feed in feeds:
            for n in conductors:
                if geometry.primitives_overlap(feed.primitive, n.primitive):
                    driven_components.add(comp[n.index])
        driven = [n for n in conductors if comp[n.index] in driven_components]
        if driven:
            boxes = [geometry.primitive_aabb(n.primitive) for n in driven]
            extent = max(b.max[2] for b in boxes) - min(b.min[2] for b in boxes)
        else:
            extent = 0.0
        rng = RngStream(METRIC_VOLUME_SEED, stream_id=hash_genome(genome))
        volume = geometry.monte_carlo_volume(
            [n.primitive for n in conductors], 100_000, rng
        ) if conductors else 0.0
        return {
            "extent_error_m": abs(extent - self.target_length_m),
            "conductor_volume_m3": volume,
        }


class MockEvaluator(Evaluator):
    """Test double with a controllable duration; real-vector genomes can
    carry their own duration in coordinate 0."""

    kind = "mock"

    def __init__(self, duration_s: float = 0.0, score: float = 1.0,
                 duration_from_genome: bool = False):
        self.duration_s = float(duration_s)
        self.score = float(score)
        self.duration_from_genome = bool(duration_from_genome)

    def metrics(self, job: EvalJob) -> dict[str, float]:
        d = self.duration_s
        if self.duration_from_genome and isinstance(job.genome, RealVectorGenome):
            d = float(job.genome.values[0])
        if d > 0.0:
            time.sleep(d)
        return {"score": self.score}


# ---------------------------------------------------------------------------
# external simulator bridge
# ---------------------------------------------------------------------------

PROTOCOL_VERSION = 1


def write_job_inputs(job: EvalJob, job_dir: Path, params: dict) -> None:
    job_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "protocol_version": PROTOCOL_VERSION,
        "job_id": job.job_id,
        "individual_type": individual_type(job.genome),
        "genome": json.loads(serialize(job.genome)),
        "geometry_file": "geometry.obj",
        "params": params,
    }
    (job_dir / "input.json").write_text(json.dumps(doc), encoding="utf-8")
    (job_dir / "geometry.obj").write_text(tessellate_genome_obj(job.genome), encoding="utf-8")


def tessellate_genome_obj(genome: Genome) -> str:
    mesh = tessellate_genome(genome)
    return geometry.mesh_to_obj(mesh) if mesh is not None else ""


def _tail(text: str, limit: int = 500) -> str:
    text = text.strip()
    return text[-limit:] if len(text) > limit else text


def run_external_job(job: EvalJob, command: list[str], timeout_s: float,
                     jobs_root: Path, params: dict) -> EvalResult:
    """One round of the file-based job protocol.

    Creates jobs/<job_id>/, writes input.json and geometry.obj, invokes
    `command... <absolute job dir>`, and parses output.json.  Any protocol
    violation maps to status=error; overrunning timeout_s kills the
    process and maps to status=timeout.
    """
    job_dir = (Path(jobs_root) / "jobs" / job.job_id).absolute()
    write_job_inputs(job, job_dir, params)
    argv = list(command) + [str(job_dir)]
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=timeout_s
        )
    except subprocess.TimeoutExpired:
        return EvalResult(job.job_id, "timeout", message=f"killed after {timeout_s}s")
    except OSError as e:
        return EvalResult(job.job_id, "error", message=f"failed to launch: {e}")
    if proc.returncode != 0:
        return EvalResult(
            job.job_id,
            "error",
            message=f"exit code {proc.returncode}: {_tail(proc.stderr)}",
        )
    out_path = job_dir / "output.json"
    if not out_path.exists():
        return EvalResult(job.job_id, "error", message="missing output.json")
    try:
        out = json.loads(out_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        return EvalResult(job.job_id, "error", message=f"malformed output.json: {e}")
    if not isinstance(out, dict) or out.get("job_id") != job.job_id:
        return EvalResult(job.job_id, "error", message="output.json job_id mismatch")
    status = out.get("status")
    if status not in ("ok", "invalid", "error"):
        return EvalResult(job.job_id, "error", message=f"bad status {status!r}")
    message = str(out.get("message", ""))
    metrics_doc = out.get("metrics", {})
    if status == "ok":
        if not isinstance(metrics_doc, dict) or not metrics_doc:
            return EvalResult(job.job_id, "error", message="ok result without metrics")
        try:
            metrics = {str(k): float(v) for k, v in metrics_doc.items()}
            return EvalResult(job.job_id, "ok", metrics, message=message)
        except (TypeError, ValueError) as e:
            return EvalResult(job.job_id, "error", message=f"non-numeric metrics: {e}")
    return EvalResult(job.job_id, status, message=message)


class ExternalEvaluator(Evaluator):
    kind = "external"

    def __init__(self, command: list[str], jobs_root: Path | str,
                 timeout_s: float = DEFAULT_TIMEOUT_S, params: dict | None = None):
        if not command:
            raise ValueError("external evaluator requires a command")
        self.command = [str(c) for c in command]
        self.jobs_root = Path(jobs_root)
        self.timeout_s = float(timeout_s)
        self.params = dict(params or {})

    def run(self, job: EvalJob) -> EvalResult:
        return run_external_job(job, self.command, self.timeout_s, self.jobs_root, self.params)


def external_evaluate(genome: Genome, command: list[str], timeout_s: float,
                      jobs_root: Path | str, job_id: str = "0" * 16,
                      params: dict | None = None) -> EvalResult:
    """Convenience one-shot wrapper around the job protocol."""
    job = EvalJob(job_id, genome, 0, RngStream(0, stream_id=int(job_id, 16)))
    return run_external_job(job, list(command), timeout_s, Path(jobs_root), dict(params or {}))


def build_evaluator(kind: str, params: dict, jobs_root: Path | str | None = None) -> Evaluator:
    """Instantiate an evaluator from its config spec."""
    if kind == "sphere":
        return SphereEvaluator()
    if kind == "rastrigin":
        return RastriginEvaluator()
    if kind == "drag_proxy":
        return DragProxyEvaluator(
            velocity_direction=tuple(params.get("velocity_direction", (0.0, 0.0, 1.0))),
            dynamic_pressure_scale=float(params.get("dynamic_pressure_scale", 1.0)),
            grid_resolution=int(params.get("grid_resolution", DRAG_GRID_RESOLUTION)),
        )
    if kind == "antenna_proxy":
        return AntennaProxyEvaluator(target_length_m=float(params.get("target_length_m", 0.5)))
    if kind == "mock":
        return MockEvaluator(
            duration_s=float(params.get("duration_s", 0.0)),
            score=float(params.get("score", 1.0)),
            duration_from_genome=bool(params.get("duration_from_genome", False)),
        )
    if kind == "external":
        if jobs_root is None:
            raise ValueError("external evaluator requires a jobs root directory")
        return ExternalEvaluator(
            command=list(params.get("command", [])),
            jobs_root=jobs_root,
            timeout_s=float(params.get("timeout_s", DEFAULT_TIMEOUT_S)),
            params=dict(params.get("params", {})),
        )
    raise ValueError(f"unknown evaluator kind {kind!r}")


# ---------------------------------------------------------------------------
# evaluation manager
# ---------------------------------------------------------------------------

_JOB_ID_SALT = 0x10B1D


def job_id_for(seed: int, index: int) -> str:
    """Deterministic 16-hex job id for submission `index` of a run."""
    return f"{word_at(seed, _JOB_ID_SALT, index):016x}"


class EvaluationManager:
    """Bounded asynchronous work pool in front of one evaluator.

    submit() and next_completed() must be called from a single driver
    thread; results cross back over an internal queue, so worker threads
    never touch the pending set.
    """

    def __init__(self, evaluator: Evaluator, max_in_flight: int, seed: int,
                 first_job_index: int = 0):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.evaluator = evaluator
        self.max_in_flight = max_in_flight
        self.seed = seed
        self._next_index = first_job_index
        self._pending: dict[str, EvalJob] = {}
        self._completed: Queue[EvalResult] = Queue()
        self._pool = ThreadPoolExecutor(max_workers=max_in_flight, thread_name_prefix="eval")
        self.max_pending_observed = 0

    # introspection -------------------------------------------------------

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    @property
    def has_capacity(self) -> bool:
        return len(self._pending) < self.max_in_flight

    @property
    def has_pending(self) -> bool:
        return bool(self._pending)

    # lifecycle -----------------------------------------------------------

    def submit(self, genome: Genome) -> str:
        """Queue one evaluation; returns the job id immediately."""
        if len(self._pending) >= self.max_in_flight:
            raise CapacityExceeded(f"{self.max_in_flight} jobs already in flight")
        if not compatible(individual_type(genome), self.evaluator.kind):
            raise IncompatiblePairing(
                f"{self.evaluator.kind} evaluator cannot interpret "
                f"{individual_type(genome)} individuals"
            )
        job_id = job_id_for(self.seed, self._next_index)
        job = EvalJob(
            job_id=job_id,
            genome=genome,
            submitted_at_eval_index=self._next_index,
            rng=RngStream(self.seed, stream_id=int(job_id, 16)),
        )
        self._next_index += 1
        self._pending[job_id] = job
        self.max_pending_observed = max(self.max_pending_observed, len(self._pending))
        self._pool.submit(self._work, job)
        return job_id

    def _work(self, job: EvalJob):
        start = time.perf_counter()
        try:
            result = self.evaluator.run(job)
        except Exception as e:  # a result must always come back
            result = EvalResult(job.job_id, "error", message=f"{type(e).__name__}: {e}")
        result = replace(result, duration_s=time.perf_counter() - start)
        self._completed.put(result)

    def next_completed(self, block: bool = False) -> EvalResult | None:
        """Next finished result in completion order; None when non-blocking
        and nothing is ready."""
        if block and not self._pending:
            raise NothingPending("no jobs in flight")
        try:
            result = self._completed.get(block=block)
        except Empty:
            return None
        del self._pending[result.job_id]
        return result

    def shutdown(self):
        self._pool.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()
        return False
