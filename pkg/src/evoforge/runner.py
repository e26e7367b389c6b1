"""Run orchestration and on-disk artifacts.

Every run directory is self-describing: config.snapshot.json, log.csv,
checkpoint.json, and best/ suffice to audit or resume the run with no
other inputs.  The evaluation log gets one CSV row per completed
evaluation, appended atomically (single write per row) so a crash never
leaves a torn line.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import ExperimentConfig, parse_config, render_config
from .evaluators import EvaluationManager, build_evaluator
from .evolvers import (
    BudgetExhausted,
    EvaluatedIndividual,
    build_evolver,
    checkpoint_load,
    checkpoint_save,
)
from .genomes import Genome, deserialize, hash_genome, serialize, tessellate_genome
from .geometry import mesh_to_obj
from .objectives import Direction, ObjectiveVector, dominates, scalar_better
from .rng import RngStream

JOB_ROOT_ENV = "ECLIPSE_JOB_ROOT"

CONFIG_SNAPSHOT = "config.snapshot.json"
LOG_FILE = "log.csv"
CHECKPOINT_FILE = "checkpoint.json"
REPORT_FILE = "report.json"
BEST_DIR = "best"


def log_header(n_objectives: int) -> str:
    objs = ",".join(f"obj_{i}" for i in range(n_objectives))
    return f"eval_index,wallclock_s,job_id,genome_id,parent_ids,layer,age,valid,{objs}"


class EvalLog:
    """Append-only CSV of completed evaluations."""

    def __init__(self, path: Path, n_objectives: int, append: bool):
        self.path = path
        self.n_objectives = n_objectives
        mode = "a" if append and path.exists() else "w"
        self._fh = open(path, mode, encoding="utf-8", newline="")
        if mode == "w":
            self._fh.write(log_header(n_objectives) + "\n")
            self._fh.flush()

    def write_row(
        self,
        eval_index: int,
        wallclock_s: float,
        job_id: str,
        genome_id: int,
        parent_ids: tuple[int, ...],
        layer: int,
        age: int,
        valid: bool,
        objectives: ObjectiveVector | None,
    ):
        parents = ";".join(f"{p:016x}" for p in parent_ids)
        objs = [""] * self.n_objectives
        if objectives is not None:
            objs = [repr(v) for v in objectives.values]
        row = (
            f"{eval_index},{wallclock_s:.3f},{job_id},{genome_id:016x},"
            f"{parents},{layer},{age},{1 if valid else 0},{','.join(objs)}\n"
        )
        self._fh.write(row)
        self._fh.flush()

    def close(self):
        self._fh.close()


@dataclass
class BestArchive:
    """Direction-aware best (single objective) or the running rank-0 front."""

    multiobjective: bool
    best: tuple[ObjectiveVector, int, Genome] | None = None
    front: list[tuple[ObjectiveVector, int, Genome]] = field(default_factory=list)

    def offer(self, objectives: ObjectiveVector, genome_id: int, genome: Genome):
        if not self.multiobjective:
            if self.best is None or scalar_better(objectives, self.best[0]):
                self.best = (objectives, genome_id, genome)
            return
        for kept, _, _ in self.front:
            if dominates(kept, objectives):
                return
        self.front = [
            entry for entry in self.front if not dominates(objectives, entry[0])
        ]
        self.front.append((objectives, genome_id, genome))

    def state_dict(self) -> dict:
        def entry_doc(entry):
            obj, gid, genome = entry
            return {
                "objectives": list(obj.values),
                "directions": [d.value for d in obj.directions],
                "genome_id": f"{gid:016x}",
                "genome": json.loads(serialize(genome)),
            }

        return {
            "multiobjective": self.multiobjective,
            "best": entry_doc(self.best) if self.best else None,
            "front": [entry_doc(e) for e in self.front],
        }

    @classmethod
    def from_state_dict(cls, doc: dict) -> "BestArchive":
        def entry(e):
            return (
                ObjectiveVector(
                    tuple(float(v) for v in e["objectives"]),
                    tuple(Direction(d) for d in e["directions"]),
                ),
                int(e["genome_id"], 16),
                deserialize(json.dumps(e["genome"])),
            )

        archive = cls(multiobjective=bool(doc["multiobjective"]))
        if doc.get("best"):
            archive.best = entry(doc["best"])
        archive.front = [entry(e) for e in doc.get("front", [])]
        return archive


@dataclass
class RunSummary:
    evaluations: int
    interrupted: bool
    archive: BestArchive


def _jobs_root(config: ExperimentConfig) -> Path:
    return Path(os.environ.get(JOB_ROOT_ENV, config.out_dir))


def build_manager(config: ExperimentConfig, first_job_index: int = 0) -> EvaluationManager:
    evaluator = build_evaluator(
        config.evaluator.kind, config.evaluator.params, jobs_root=_jobs_root(config)
    )
    return EvaluationManager(
        evaluator,
        max_in_flight=config.max_in_flight,
        seed=config.seed,
        first_job_index=first_job_index,
    )


def _write_checkpoint(out: Path, evolver, archive: BestArchive):
    doc = json.loads(checkpoint_save(evolver))
    doc["archive"] = archive.state_dict()
    tmp = out / (CHECKPOINT_FILE + ".tmp")
    tmp.write_text(json.dumps(doc), encoding="utf-8")
    tmp.replace(out / CHECKPOINT_FILE)


def _write_best(out: Path, archive: BestArchive):
    best_dir = out / BEST_DIR
    best_dir.mkdir(exist_ok=True)
    entries = archive.front if archive.multiobjective else (
        [archive.best] if archive.best else []
    )
    if not entries:
        return
    if archive.multiobjective:
        (best_dir / "front.json").write_text(
            json.dumps(
                [
                    {
                        "genome_id": f"{gid:016x}",
                        "objectives": list(obj.values),
                        "directions": [d.value for d in obj.directions],
                        "genome": json.loads(serialize(genome)),
                    }
                    for obj, gid, genome in entries
                ],
                indent=2,
            ),
            encoding="utf-8",
        )
    obj, gid, genome = entries[0]
    (best_dir / "genome.json").write_text(serialize(genome), encoding="utf-8")
    mesh = tessellate_genome(genome)
    if mesh is not None:
        (best_dir / "geometry.obj").write_text(mesh_to_obj(mesh), encoding="utf-8")


def run_experiment(
    config: ExperimentConfig,
    resume: bool = False,
    should_stop=None,
    manager: EvaluationManager | None = None,
) -> RunSummary:
    """Drive the configured evolver to budget exhaustion (or interruption).

    With resume=True the evolver state is restored from checkpoint.json and
    log.csv is appended, never truncated.  `should_stop` is polled between
    scheduler iterations; when it fires, in-flight work is drained, a
    quiescent checkpoint is written, and the function returns cleanly.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_obj = len(config.evaluator.fitness.objectives)
    multi = n_obj >= 2

    rng = RngStream(config.seed, stream_id=1)
    evolver = build_evolver(config, rng)
    archive = BestArchive(multiobjective=multi)
    if resume:
        checkpoint_path = out / CHECKPOINT_FILE
        doc = json.loads(checkpoint_path.read_text(encoding="utf-8"))
        checkpoint_load(json.dumps(doc), evolver)
        if "archive" in doc:
            archive = BestArchive.from_state_dict(doc["archive"])
    else:
        (out / CONFIG_SNAPSHOT).write_text(render_config(config), encoding="utf-8")

    if evolver.evaluations_used >= config.max_evaluations:
        return RunSummary(evolver.evaluations_used, interrupted=False, archive=archive)

    log = EvalLog(out / LOG_FILE, n_obj, append=resume)
    started = time.perf_counter()
    eval_counter = evolver.evaluations_used

    def on_result(result, ctx, individual: EvaluatedIndividual | None, note: str):
        nonlocal eval_counter
        genome_id = individual.id if individual else hash_genome(ctx.genome)
        age = individual.age if individual else 0
        layer = ctx.origin_layer
        log.write_row(
            eval_counter,
            time.perf_counter() - started,
            result.job_id,
            genome_id,
            ctx.parent_ids,
            layer,
            age,
            individual is not None,
            individual.objectives if individual else None,
        )
        eval_counter += 1
        if individual is not None:
            archive.offer(individual.objectives, individual.id, individual.genome)

    own_manager = manager is None
    mgr = manager or build_manager(config, first_job_index=evolver.submissions)
    interrupted = False
    try:
        while True:
            if should_stop is not None and should_stop():
                interrupted = True
                # quiesce: the hill climber drains inside step(), so only the
                # ALPS evolver can hold in-flight work here
                while evolver.in_flight:
                    result = mgr.next_completed(block=True)
                    on_result(result, *evolver.commit(result))
                break
            try:
                evolver.step(mgr, on_result=on_result)
            except BudgetExhausted:
                break
    finally:
        log.close()
        if own_manager:
            mgr.shutdown()
    _write_checkpoint(out, evolver, archive)
    _write_best(out, archive)
    return RunSummary(evolver.evaluations_used, interrupted=interrupted, archive=archive)


def resume_experiment(out_dir: str | Path, should_stop=None) -> RunSummary:
    out = Path(out_dir)
    config = parse_config((out / CONFIG_SNAPSHOT).read_text(encoding="utf-8"))
    return run_experiment(config, resume=True, should_stop=should_stop)


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def read_log(out_dir: str | Path) -> tuple[list[str], list[dict]]:
    path = Path(out_dir) / LOG_FILE
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FileNotFoundError(f"empty log at {path}")
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        row = dict(zip(header, parts))
        rows.append(row)
    return header, rows


def generate_report(out_dir: str | Path) -> dict:
    """Plot-ready summary: evals, best objectives, per-100-eval best-so-far
    series, and the rank-0 front when multiobjective."""
    out = Path(out_dir)
    config = parse_config((out / CONFIG_SNAPSHOT).read_text(encoding="utf-8"))
    directions = config.evaluator.fitness.directions
    header, rows = read_log(out)
    if not rows:
        raise FileNotFoundError("log.csv has no data rows")
    n_obj = len(directions)
    valid_rows = [r for r in rows if r["valid"] == "1"]

    def objectives_of(row) -> tuple[float, ...]:
        return tuple(float(row[f"obj_{i}"]) for i in range(n_obj))

    sign = [1.0 if d is Direction.MINIMIZE else -1.0 for d in directions]
    best_so_far = None
    best_row = None
    series = []
    for i, row in enumerate(rows):
        if row["valid"] == "1":
            v0 = objectives_of(row)[0] * sign[0]
            if best_so_far is None or v0 < best_so_far:
                best_so_far = v0
                best_row = row
        if (i + 1) % 100 == 0 or i + 1 == len(rows):
            series.append(
                {
                    "evals": i + 1,
                    "best_obj_0": None if best_so_far is None else best_so_far * sign[0],
                }
            )
    report = {
        "evals": len(rows),
        "valid_evals": len(valid_rows),
        "best_objectives": list(objectives_of(best_row)) if best_row else None,
        "best_genome_id": best_row["genome_id"] if best_row else None,
        "best_so_far_series": series,
    }
    if n_obj >= 2 and valid_rows:
        vectors = [
            ObjectiveVector(objectives_of(r), directions) for r in valid_rows
        ]
        from .selection import nondominated_sort

        ranking = nondominated_sort(vectors)
        front = [
            {"genome_id": valid_rows[i]["genome_id"], "objectives": list(vectors[i].values)}
            for i in range(len(valid_rows))
            if ranking.rank[i] == 0
        ]
        # collapse duplicate genomes that re-entered the log
        seen = set()
        unique_front = []
        for entry in front:
            if entry["genome_id"] not in seen:
                seen.add(entry["genome_id"])
                unique_front.append(entry)
        report["front_size"] = len(unique_front)
        report["front"] = unique_front
    (out / REPORT_FILE).write_text(json.dumps(report, indent=2), encoding="utf-8")
    return report
