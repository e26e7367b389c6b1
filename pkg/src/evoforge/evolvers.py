"""Population management: the ALPS steady-state GA and a hill climber.

The evolver loop is single-threaded; all parallelism lives behind the
EvaluationManager.  One step() call drains finished evaluations, commits
offspring, and refills the in-flight window, so the same code path serves
max_in_flight=1 (bitwise reproducible) and wide asynchronous runs.

Age accounting follows steady-state ALPS conventions: age counts
generation-equivalents (total-capacity births equal one generation),
offspring inherit the oldest parent's age, random injections start at
age 0, and layer i admits ages up to (i+1)^2 * age_gap with the top
layer unbounded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .config import ExperimentConfig, SelectorSpec
from .evaluators import EvalResult, EvaluationManager
from .fitness import FitnessFunctionSpec, MissingMetric, NonFiniteObjective
from .genomes import (
    Genome,
    KIND_POINTCLOUD,
    KIND_REALVECTOR,
    deserialize,
    hash_genome,
    serialize,
)
from .mutation import (
    CrossoverFailure,
    MutationExhausted,
    MutationRates,
    crossover,
    default_pointcloud_constraints,
    default_shape_constraints,
    mutate,
    random_genome,
)
from .objectives import Direction, ObjectiveVector, dominates, scalar_not_worse
from .rng import RngStream
from .selection import birth_select, death_select

CHECKPOINT_FORMAT = 1


class BudgetExhausted(Exception):
    """All budgeted evaluations are submitted and drained: the run is over."""


class CheckpointBusy(RuntimeError):
    """Checkpoints are quiescent-only; drain in-flight jobs first."""


class LoadError(ValueError):
    """Unreadable or inconsistent checkpoint document."""


@dataclass
class EvaluatedIndividual:
    genome: Genome
    objectives: ObjectiveVector
    age: int
    layer: int
    id: int
    parent_ids: tuple[int, ...]
    birth_eval_index: int


@dataclass
class Layer:
    index: int
    age_limit: int | None  # None = unbounded (top layer)
    capacity: int
    members: list[EvaluatedIndividual] = field(default_factory=list)


def age_limits(layers: int, age_gap: int) -> list[int | None]:
    """Polynomial ALPS scheme: limit(i) = (i+1)^2 * age_gap; top unbounded."""
    out: list[int | None] = [(i + 1) ** 2 * age_gap for i in range(layers - 1)]
    out.append(None)
    return out


@dataclass
class BirthContext:
    origin_layer: int
    parent_ids: tuple[int, ...]
    parent_age_base: int
    submit_gen: int
    genome: Genome
    is_random: bool


def genome_space(individual_type: str, params: dict):
    """Constraint object for random_genome / the config's individual params."""
    if individual_type == KIND_REALVECTOR:
        dim = int(params.get("dimension", 10))
        lo = float(params.get("lower", -5.0))
        hi = float(params.get("upper", 5.0))
        if "bounds" in params:
            return tuple((float(a), float(b)) for a, b in params["bounds"])
        return tuple((lo, hi) for _ in range(dim))
    if individual_type == KIND_POINTCLOUD:
        base = default_pointcloud_constraints()
        return _override_dataclass(base, params, {"bounds", "cargo"})
    base = default_shape_constraints(individual_type)
    return _override_dataclass(base, params, {"bounds"})


def _override_dataclass(base, params: dict, aabb_keys: set[str]):
    from dataclasses import replace as dc_replace

    from .geometry import Aabb

    updates = {}
    for key, value in params.items():
        if not hasattr(base, key):
            raise ValueError(f"unknown individual parameter {key!r}")
        if key in aabb_keys:
            updates[key] = Aabb(tuple(value["min"]), tuple(value["max"]))
        elif key == "panels":
            continue  # panels are fixed by the default constraint set
        elif isinstance(getattr(base, key), int):
            updates[key] = int(value)
        else:
            updates[key] = float(value)
    return dc_replace(base, **updates)


# ---------------------------------------------------------------------------
# ALPS steady-state evolver
# ---------------------------------------------------------------------------

class AlpsEvolver:
    """Steady-state GA over an age-layered population.

    Scheduler contract per step: (1) drain every finished evaluation and
    commit it to its origin layer (death competition when full, promotion
    of over-age members upward); (2) refill the in-flight window with new
    births: random genomes while layer 0 is (re)seeding, otherwise
    selector-driven births inside a uniformly chosen non-empty layer, with
    a configurable chance of drawing each parent from the layer below.
    """

    kind = "alps_steady_state"

    def __init__(
        self,
        individual_type: str,
        space,
        fitness: FitnessFunctionSpec,
        rates: MutationRates,
        birth_selector: SelectorSpec,
        death_selector: SelectorSpec,
        max_evaluations: int,
        rng: RngStream,
        layers: int = 5,
        age_gap: int = 10,
        layer_capacity: int = 20,
        inflow_probability: float = 0.2,
        crossover_rate: float = 0.0,
    ):
        self.individual_type = individual_type
        self.space = space
        self.fitness = fitness
        self.rates = rates
        self.birth_selector = birth_selector
        self.death_selector = death_selector
        self.max_evaluations = max_evaluations
        self.rng = rng
        self.age_gap = age_gap
        self.layer_capacity = layer_capacity
        self.inflow_probability = inflow_probability
        self.crossover_rate = crossover_rate
        self.layers = [
            Layer(i, limit, layer_capacity)
            for i, limit in enumerate(age_limits(layers, age_gap))
        ]
        self.total_capacity = layers * layer_capacity
        self.evaluations_used = 0
        self.births_attempted = 0
        self.submissions = 0
        self.births_committed = 0
        self.pending_random = layer_capacity  # bootstrap: seed layer 0
        self.next_reseed_at = age_gap * layer_capacity
        self.in_flight: dict[str, BirthContext] = {}

    # -- bookkeeping --------------------------------------------------------

    @property
    def generation(self) -> int:
        return self.births_committed // self.total_capacity

    def population(self) -> list[EvaluatedIndividual]:
        return [m for layer in self.layers for m in layer.members]

    def _death_index(self, pool: list[EvaluatedIndividual]) -> int:
        return death_select(self.death_selector.kind, self.death_selector.k, pool, self.rng)

    def _insert(self, ind: EvaluatedIndividual, layer_index: int):
        layer = self.layers[layer_index]
        ind.layer = layer_index
        if len(layer.members) < layer.capacity:
            layer.members.append(ind)
            return
        pool = layer.members + [ind]
        victim = self._death_index(pool)
        pool.pop(victim)
        layer.members = pool

    def _promote_overage(self):
        for i in range(len(self.layers) - 1):
            layer = self.layers[i]
            limit = layer.age_limit
            movers = [m for m in layer.members if m.age > limit]
            if not movers:
                continue
            layer.members = [m for m in layer.members if m.age <= limit]
            for m in movers:
                self._insert(m, i + 1)

    def _age_tick(self):
        for layer in self.layers:
            for m in layer.members:
                m.age += 1

    # -- drain side ----------------------------------------------------------

    def commit(self, result: EvalResult) -> tuple[BirthContext, EvaluatedIndividual | None, str]:
        """Fold one finished evaluation into the population.

        Returns (birth context, committed individual or None, note)."""
        ctx = self.in_flight.pop(result.job_id)
        note = result.message
        individual = None
        if result.status == "ok":
            try:
                objectives = self.fitness.apply(result.metrics)
            except (MissingMetric, NonFiniteObjective) as e:
                objectives = None
                note = f"fitness error: {e}"
            if objectives is not None:
                if ctx.is_random:
                    age = 0
                else:
                    age = ctx.parent_age_base + (self.generation - ctx.submit_gen)
                individual = EvaluatedIndividual(
                    genome=ctx.genome,
                    objectives=objectives,
                    age=age,
                    layer=ctx.origin_layer,
                    id=hash_genome(ctx.genome),
                    parent_ids=ctx.parent_ids,
                    birth_eval_index=self.evaluations_used,
                )
                # count and tick before inserting: a newborn never receives
                # the generation tick its own commit triggers, so its logged
                # age is well-defined whether or not it survives placement
                self.births_committed += 1
                if self.births_committed % self.total_capacity == 0:
                    self._age_tick()
                self._insert(individual, ctx.origin_layer)
                self._promote_overage()
        self.evaluations_used += 1
        return ctx, individual, note

    # -- birth side ----------------------------------------------------------

    def _select_parent(self, layer_index: int) -> EvaluatedIndividual:
        pick = layer_index
        if (
            layer_index > 0
            and self.layers[layer_index - 1].members
            and self.rng.uniform() < self.inflow_probability
        ):
            pick = layer_index - 1
        members = self.layers[pick].members
        idx = birth_select(self.birth_selector.kind, self.birth_selector.k, members, self.rng)
        return members[idx]

    def _breed(self, layer_index: int) -> tuple[Genome, tuple[int, ...], int] | None:
        """One offspring genome for a layer; None when the birth is skipped."""
        p1 = self._select_parent(layer_index)
        parents = [p1]
        child = None
        if self.crossover_rate > 0.0 and self.rng.uniform() < self.crossover_rate:
            p2 = self._select_parent(layer_index)
            try:
                child = crossover(p1.genome, p2.genome, self.rng)
                parents.append(p2)
            except CrossoverFailure:
                child = None  # fall back to mutation-only birth
        try:
            child = mutate(child if child is not None else p1.genome, self.rates, self.rng)
        except MutationExhausted:
            return None
        return child, tuple(p.id for p in parents), max(p.age for p in parents)

    def _next_birth(self) -> BirthContext | None:
        if self.submissions >= self.next_reseed_at:
            # injection: the next layer_capacity births are fresh random
            # genomes aimed at layer 0; they displace members through the
            # normal death competition rather than a wholesale wipe, so good
            # young material can still survive to promotion age
            self.pending_random = self.layer_capacity
            self.next_reseed_at += self.age_gap * self.layer_capacity
        nonempty = [i for i, layer in enumerate(self.layers) if layer.members]
        if self.pending_random > 0 or not nonempty:
            genome = random_genome(self.individual_type, self.space, self.rng)
            self.pending_random = max(0, self.pending_random - 1)
            return BirthContext(0, (), 0, self.generation, genome, True)
        layer_index = nonempty[self.rng.randrange(len(nonempty))]
        bred = self._breed(layer_index)
        if bred is None:
            return None
        genome, parent_ids, age_base = bred
        return BirthContext(layer_index, parent_ids, age_base, self.generation, genome, False)

    def submit_phase(self, mgr: EvaluationManager) -> int:
        submitted = 0
        skipped = 0
        while mgr.has_capacity and self.submissions < self.max_evaluations:
            ctx = self._next_birth()
            self.births_attempted += 1
            if ctx is None:
                skipped += 1
                if skipped >= 5:  # avoid spinning on a pathological landscape
                    break
                continue
            job_id = mgr.submit(ctx.genome)
            self.in_flight[job_id] = ctx
            self.submissions += 1
            submitted += 1
        return submitted

    # -- the scheduler iteration ----------------------------------------------

    def step(self, mgr: EvaluationManager, on_result=None):
        """One scheduler iteration; raises BudgetExhausted when the run is done."""
        if self.evaluations_used >= self.max_evaluations and not self.in_flight:
            raise BudgetExhausted
        progressed = 0
        while True:
            result = mgr.next_completed(block=False)
            if result is None:
                break
            committed = self.commit(result)
            if on_result:
                on_result(result, *committed)
            progressed += 1
        progressed += self.submit_phase(mgr)
        if progressed == 0 and self.in_flight:
            result = mgr.next_completed(block=True)
            committed = self.commit(result)
            if on_result:
                on_result(result, *committed)

    # -- checkpointing ---------------------------------------------------------

    def state_dict(self) -> dict:
        if self.in_flight:
            raise CheckpointBusy(f"{len(self.in_flight)} jobs in flight")
        return {
            "layers": [
                {
                    "index": layer.index,
                    "members": [_individual_doc(m) for m in layer.members],
                }
                for layer in self.layers
            ],
            "evaluations_used": self.evaluations_used,
            "births_attempted": self.births_attempted,
            "submissions": self.submissions,
            "births_committed": self.births_committed,
            "pending_random": self.pending_random,
            "next_reseed_at": self.next_reseed_at,
            "rng": self.rng.state_dict(),
        }

    def load_state_dict(self, state: dict):
        try:
            for layer, doc in zip(self.layers, state["layers"]):
                layer.members = [_individual_from_doc(m) for m in doc["members"]]
            self.evaluations_used = int(state["evaluations_used"])
            self.births_attempted = int(state["births_attempted"])
            self.submissions = int(state["submissions"])
            self.births_committed = int(state["births_committed"])
            self.pending_random = int(state["pending_random"])
            self.next_reseed_at = int(state["next_reseed_at"])
            self.rng = RngStream.from_state_dict(state["rng"])
        except (KeyError, TypeError, ValueError) as e:
            raise LoadError(f"bad evolver state: {e}") from e


# ---------------------------------------------------------------------------
# hill climber
# ---------------------------------------------------------------------------

class HillClimber:
    """Accept-if-not-worse local search; with max_in_flight > 1 each round
    evaluates that many candidate mutations in parallel and keeps the best
    non-worse one (ties accepted: neutral drift)."""

    kind = "hill_climber"

    def __init__(
        self,
        individual_type: str,
        space,
        fitness: FitnessFunctionSpec,
        rates: MutationRates,
        max_evaluations: int,
        rng: RngStream,
    ):
        self.individual_type = individual_type
        self.space = space
        self.fitness = fitness
        self.rates = rates
        self.max_evaluations = max_evaluations
        self.rng = rng
        self.champion: EvaluatedIndividual | None = None
        self.evaluations_used = 0
        self.births_attempted = 0
        self.submissions = 0
        self.in_flight: dict[str, BirthContext] = {}

    def _candidate(self, result: EvalResult, ctx: BirthContext) -> EvaluatedIndividual | None:
        if result.status != "ok":
            return None
        try:
            objectives = self.fitness.apply(result.metrics)
        except (MissingMetric, NonFiniteObjective):
            return None
        return EvaluatedIndividual(
            genome=ctx.genome,
            objectives=objectives,
            age=0,
            layer=0,
            id=hash_genome(ctx.genome),
            parent_ids=ctx.parent_ids,
            birth_eval_index=self.evaluations_used,
        )

    def _not_worse(self, cand: ObjectiveVector, champ: ObjectiveVector) -> bool:
        if len(cand) == 1:
            return scalar_not_worse(cand, champ)
        return not dominates(champ, cand)

    def step(self, mgr: EvaluationManager, on_result=None):
        """One round: submit up to max_in_flight candidates, drain them all,
        accept the best non-worse candidate."""
        remaining = self.max_evaluations - self.submissions
        if remaining <= 0 and not self.in_flight:
            raise BudgetExhausted
        round_size = min(mgr.max_in_flight, remaining)
        submitted: list[str] = []
        for _ in range(round_size):
            if self.champion is None and submitted:
                break  # bootstrap round is a single random genome
            if self.champion is None:
                genome = random_genome(self.individual_type, self.space, self.rng)
                ctx = BirthContext(0, (), 0, 0, genome, True)
            else:
                try:
                    genome = mutate(self.champion.genome, self.rates, self.rng)
                except MutationExhausted:
                    self.births_attempted += 1
                    continue
                ctx = BirthContext(0, (self.champion.id,), 0, 0, genome, False)
            job_id = mgr.submit(ctx.genome)
            self.in_flight[job_id] = ctx
            self.births_attempted += 1
            self.submissions += 1
            submitted.append(job_id)
        if not submitted and not self.in_flight:
            raise BudgetExhausted
        candidates: list[EvaluatedIndividual] = []
        while self.in_flight:
            result = mgr.next_completed(block=True)
            ctx = self.in_flight.pop(result.job_id)
            cand = self._candidate(result, ctx)
            if on_result:
                on_result(result, ctx, cand, result.message)
            self.evaluations_used += 1
            if cand is not None:
                candidates.append(cand)
        if not candidates:
            return
        best = candidates[0]
        for cand in candidates[1:]:
            if dominates(cand.objectives, best.objectives) or (
                not dominates(best.objectives, cand.objectives) and cand.id < best.id
            ):
                best = cand
        if self.champion is None or self._not_worse(best.objectives, self.champion.objectives):
            self.champion = best

    def state_dict(self) -> dict:
        if self.in_flight:
            raise CheckpointBusy(f"{len(self.in_flight)} jobs in flight")
        return {
            "champion": _individual_doc(self.champion) if self.champion else None,
            "evaluations_used": self.evaluations_used,
            "births_attempted": self.births_attempted,
            "submissions": self.submissions,
            "rng": self.rng.state_dict(),
        }

    def load_state_dict(self, state: dict):
        try:
            champ = state["champion"]
            self.champion = _individual_from_doc(champ) if champ else None
            self.evaluations_used = int(state["evaluations_used"])
            self.births_attempted = int(state["births_attempted"])
            self.submissions = int(state["submissions"])
            self.rng = RngStream.from_state_dict(state["rng"])
        except (KeyError, TypeError, ValueError) as e:
            raise LoadError(f"bad evolver state: {e}") from e


# ---------------------------------------------------------------------------
# (de)serialization of individuals and whole checkpoints
# ---------------------------------------------------------------------------

def _individual_doc(ind: EvaluatedIndividual) -> dict:
    return {
        "genome": json.loads(serialize(ind.genome)),
        "objectives": {
            "values": list(ind.objectives.values),
            "directions": [d.value for d in ind.objectives.directions],
        },
        "age": ind.age,
        "layer": ind.layer,
        "id": f"{ind.id:016x}",
        "parent_ids": [f"{p:016x}" for p in ind.parent_ids],
        "birth_eval_index": ind.birth_eval_index,
    }


def _individual_from_doc(doc: dict) -> EvaluatedIndividual:
    return EvaluatedIndividual(
        genome=deserialize(json.dumps(doc["genome"])),
        objectives=ObjectiveVector(
            tuple(float(v) for v in doc["objectives"]["values"]),
            tuple(Direction(d) for d in doc["objectives"]["directions"]),
        ),
        age=int(doc["age"]),
        layer=int(doc["layer"]),
        id=int(doc["id"], 16),
        parent_ids=tuple(int(p, 16) for p in doc["parent_ids"]),
        birth_eval_index=int(doc["birth_eval_index"]),
    )


def build_evolver(config: ExperimentConfig, rng: RngStream):
    space = genome_space(config.individual_type, config.individual_params)
    if config.evolver.kind == "hill_climber":
        return HillClimber(
            individual_type=config.individual_type,
            space=space,
            fitness=config.evaluator.fitness,
            rates=config.evolver.mutation,
            max_evaluations=config.max_evaluations,
            rng=rng,
        )
    return AlpsEvolver(
        individual_type=config.individual_type,
        space=space,
        fitness=config.evaluator.fitness,
        rates=config.evolver.mutation,
        birth_selector=config.birth_selector,
        death_selector=config.death_selector,
        max_evaluations=config.max_evaluations,
        rng=rng,
        layers=config.evolver.layers,
        age_gap=config.evolver.age_gap,
        layer_capacity=config.evolver.layer_capacity,
        inflow_probability=config.evolver.inflow_probability,
        crossover_rate=config.evolver.crossover_rate,
    )


def checkpoint_save(evolver) -> str:
    """Quiescent-state checkpoint document (CheckpointBusy if jobs are in flight)."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "evolver": evolver.kind,
        "state": evolver.state_dict(),
    }
    return json.dumps(doc)


def checkpoint_load(document: str, evolver) -> None:
    """Restore evolver state saved by checkpoint_save into a freshly built
    evolver of the same kind/config."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise LoadError(f"invalid checkpoint JSON: {e}") from e
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise LoadError("unsupported checkpoint format")
    if doc.get("evolver") != evolver.kind:
        raise LoadError(
            f"checkpoint is for {doc.get('evolver')!r}, not {evolver.kind!r}"
        )
    evolver.load_state_dict(doc.get("state", {}))
