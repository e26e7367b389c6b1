"""Experiment configuration: one JSON document describes a whole run.

Top-level keys: individual, evaluator, evolver, selection, budget, seed,
out_dir.  Unknown keys anywhere are an error so typos fail fast instead
of silently falling back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .fitness import FitnessFunctionSpec, FitnessSpecError, ObjectiveSpec
from .genomes import ALL_KINDS, KIND_REALVECTOR, compatible
from .mutation import MutationRates
from .objectives import Direction

EVOLVER_KINDS = ("alps_steady_state", "hill_climber")
SELECTOR_KINDS = ("tournament", "roulette", "nsga2")

#: metric names declared by the built-in evaluators (None = open set)
EVALUATOR_METRICS: dict[str, frozenset[str] | None] = {
    "sphere": frozenset({"f"}),
    "rastrigin": frozenset({"f"}),
    "drag_proxy": frozenset({"projected_area_m2", "cargo_volume_m3"}),
    "antenna_proxy": frozenset({"extent_error_m", "conductor_volume_m3"}),
    "mock": None,
    "external": None,
}

_DEFAULT_OBJECTIVES: dict[str, tuple[tuple[str, Direction], ...]] = {
    "sphere": (("f", Direction.MINIMIZE),),
    "rastrigin": (("f", Direction.MINIMIZE),),
    "drag_proxy": (("projected_area_m2", Direction.MINIMIZE),),
    "antenna_proxy": (("extent_error_m", Direction.MINIMIZE),),
}


class ParseError(ValueError):
    """Structurally malformed config document."""


class ValidationError(ValueError):
    """Well-formed but semantically invalid config; message carries the field path."""


@dataclass(frozen=True)
class SelectorSpec:
    kind: str
    k: int = 3  # tournament size; ignored by other kinds


@dataclass(frozen=True)
class EvaluatorSpec:
    kind: str
    params: dict = field(default_factory=dict)
    fitness: FitnessFunctionSpec = None  # type: ignore[assignment]


@dataclass(frozen=True)
class EvolverSpec:
    kind: str
    layers: int = 5
    age_gap: int = 10
    layer_capacity: int = 20
    inflow_probability: float = 0.2
    crossover_rate: float = 0.0
    mutation: MutationRates = field(default_factory=MutationRates)


@dataclass(frozen=True)
class ExperimentConfig:
    individual_type: str
    individual_params: dict
    evaluator: EvaluatorSpec
    evolver: EvolverSpec
    birth_selector: SelectorSpec
    death_selector: SelectorSpec
    max_evaluations: int
    max_in_flight: int
    seed: int
    out_dir: str


def _check_keys(obj: dict, allowed: set[str], path: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ParseError(f"{path}: unknown keys {sorted(unknown)}")


def _as_dict(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: expected an object")
    return obj


def _as_int(obj, path: str) -> int:
    if not isinstance(obj, int) or isinstance(obj, bool):
        raise ParseError(f"{path}: expected an integer")
    return obj


def _parse_selector(doc, path: str, default_kind: str) -> SelectorSpec:
    if doc is None:
        return SelectorSpec(kind=default_kind)
    doc = _as_dict(doc, path)
    _check_keys(doc, {"kind", "k"}, path)
    kind = doc.get("kind", default_kind)
    if kind not in SELECTOR_KINDS:
        raise ValidationError(f"{path}.kind: unknown selector {kind!r}")
    k = _as_int(doc.get("k", 3), path + ".k")
    if kind == "tournament" and k < 1:
        raise ValidationError(f"{path}.k: tournament size must be >= 1")
    return SelectorSpec(kind=kind, k=k)


def _parse_objectives(doc, path: str, evaluator_kind: str) -> FitnessFunctionSpec:
    if doc is None:
        defaults = _DEFAULT_OBJECTIVES.get(evaluator_kind)
        if defaults is None:
            raise ValidationError(
                f"{path}: evaluator {evaluator_kind!r} has no default objectives; specify them"
            )
        return FitnessFunctionSpec(tuple(ObjectiveSpec(e, d) for e, d in defaults))
    if not isinstance(doc, list) or not doc:
        raise ParseError(f"{path}: expected a non-empty list")
    specs = []
    for i, entry in enumerate(doc):
        where = f"{path}[{i}]"
        entry = _as_dict(entry, where)
        _check_keys(entry, {"expr", "metric", "direction"}, where)
        expr = entry.get("expr", entry.get("metric"))
        if not isinstance(expr, str):
            raise ParseError(f"{where}: expected an 'expr' or 'metric' string")
        direction = entry.get("direction", "minimize")
        try:
            d = Direction(direction)
        except ValueError:
            raise ValidationError(f"{where}.direction: must be minimize or maximize")
        try:
            specs.append(ObjectiveSpec(expr, d))
        except FitnessSpecError as e:
            raise ValidationError(f"{where}.expr: {e}")
    return FitnessFunctionSpec(tuple(specs))


def _parse_mutation(doc, path: str) -> MutationRates:
    if doc is None:
        return MutationRates()
    doc = _as_dict(doc, path)
    fields = {f for f in MutationRates.__dataclass_fields__}
    _check_keys(doc, fields, path)
    try:
        rates = MutationRates(**{k: float(v) for k, v in doc.items()})
    except (TypeError, ValueError) as e:
        raise ParseError(f"{path}: {e}")
    for name in fields:
        if getattr(rates, name) < 0.0:
            raise ValidationError(f"{path}.{name}: must be >= 0")
    return rates


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a config document, filling in defaults."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e}") from e
    doc = _as_dict(doc, "$")
    _check_keys(doc, {"individual", "evaluator", "evolver", "selection", "budget", "seed", "out_dir"}, "$")

    for key in ("individual", "evaluator", "evolver", "out_dir"):
        if key not in doc:
            raise ParseError(f"$.{key}: required")

    ind = _as_dict(doc["individual"], "$.individual")
    _check_keys(ind, {"type", "params"}, "$.individual")
    individual_type = ind.get("type")
    if individual_type not in ALL_KINDS:
        raise ValidationError(f"$.individual.type: unknown individual type {individual_type!r}")
    individual_params = _as_dict(ind.get("params", {}), "$.individual.params")

    ev = _as_dict(doc["evaluator"], "$.evaluator")
    _check_keys(ev, {"kind", "params", "objectives"}, "$.evaluator")
    ev_kind = ev.get("kind")
    if ev_kind not in EVALUATOR_METRICS:
        raise ValidationError(f"$.evaluator.kind: unknown evaluator {ev_kind!r}")
    if not compatible(individual_type, ev_kind):
        raise ValidationError(
            f"$.evaluator.kind: evaluator {ev_kind!r} cannot interpret {individual_type!r} individuals"
        )
    fitness = _parse_objectives(ev.get("objectives"), "$.evaluator.objectives", ev_kind)
    try:
        fitness.check_against(EVALUATOR_METRICS[ev_kind])
    except FitnessSpecError as e:
        raise ValidationError(f"$.evaluator.objectives: {e}")
    evaluator = EvaluatorSpec(kind=ev_kind, params=_as_dict(ev.get("params", {}), "$.evaluator.params"), fitness=fitness)

    evo = _as_dict(doc["evolver"], "$.evolver")
    _check_keys(evo, {"kind", "params"}, "$.evolver")
    evo_kind = evo.get("kind")
    if evo_kind not in EVOLVER_KINDS:
        raise ValidationError(f"$.evolver.kind: unknown evolver {evo_kind!r}")
    evo_params = _as_dict(evo.get("params", {}), "$.evolver.params")
    _check_keys(
        evo_params,
        {"layers", "age_gap", "layer_capacity", "inflow_probability", "crossover_rate", "mutation"},
        "$.evolver.params",
    )
    default_crossover = 0.5 if individual_type == KIND_REALVECTOR else 0.0
    evolver = EvolverSpec(
        kind=evo_kind,
        layers=_as_int(evo_params.get("layers", 5), "$.evolver.params.layers"),
        age_gap=_as_int(evo_params.get("age_gap", 10), "$.evolver.params.age_gap"),
        layer_capacity=_as_int(evo_params.get("layer_capacity", 20), "$.evolver.params.layer_capacity"),
        inflow_probability=float(evo_params.get("inflow_probability", 0.2)),
        crossover_rate=float(evo_params.get("crossover_rate", default_crossover)),
        mutation=_parse_mutation(evo_params.get("mutation"), "$.evolver.params.mutation"),
    )
    for name in ("layers", "age_gap", "layer_capacity"):
        if getattr(evolver, name) < 1:
            raise ValidationError(f"$.evolver.params.{name}: must be >= 1")
    if not 0.0 <= evolver.inflow_probability <= 1.0:
        raise ValidationError("$.evolver.params.inflow_probability: must be in [0, 1]")
    if not 0.0 <= evolver.crossover_rate <= 1.0:
        raise ValidationError("$.evolver.params.crossover_rate: must be in [0, 1]")

    n_obj = len(fitness.objectives)
    default_selector = "nsga2" if n_obj >= 2 else "tournament"
    sel = doc.get("selection")
    birth_doc = death_doc = None
    if sel is not None:
        sel = _as_dict(sel, "$.selection")
        _check_keys(sel, {"birth", "death"}, "$.selection")
        birth_doc, death_doc = sel.get("birth"), sel.get("death")
    birth = _parse_selector(birth_doc, "$.selection.birth", default_selector)
    death = _parse_selector(death_doc, "$.selection.death", default_selector)

    for role, spec in (("birth", birth), ("death", death)):
        path = f"$.selection.{role}"
        if spec.kind == "roulette":
            if n_obj != 1 or fitness.directions[0] is not Direction.MAXIMIZE:
                raise ValidationError(
                    f"{path}: roulette requires a single Maximize objective"
                )
        if spec.kind == "nsga2" and n_obj < 2:
            raise ValidationError(f"{path}: nsga2 requires at least 2 objectives")

    if evo_kind == "hill_climber" and n_obj != 1:
        raise ValidationError("$.evolver.kind: hill_climber requires a single objective")

    budget = _as_dict(doc.get("budget", {}), "$.budget")
    _check_keys(budget, {"max_evaluations", "max_in_flight"}, "$.budget")
    max_evaluations = _as_int(budget.get("max_evaluations", 1000), "$.budget.max_evaluations")
    max_in_flight = _as_int(budget.get("max_in_flight", 1), "$.budget.max_in_flight")
    if max_evaluations < 1:
        raise ValidationError("$.budget.max_evaluations: must be >= 1")
    if max_in_flight < 1:
        raise ValidationError("$.budget.max_in_flight: must be >= 1")

    seed = _as_int(doc.get("seed", 0), "$.seed")
    if not 0 <= seed < 2**64:
        raise ValidationError("$.seed: must fit in an unsigned 64-bit integer")
    out_dir = doc["out_dir"]
    if not isinstance(out_dir, str) or not out_dir:
        raise ParseError("$.out_dir: expected a non-empty string")

    return ExperimentConfig(
        individual_type=individual_type,
        individual_params=individual_params,
        evaluator=evaluator,
        evolver=evolver,
        birth_selector=birth,
        death_selector=death,
        max_evaluations=max_evaluations,
        max_in_flight=max_in_flight,
        seed=seed,
        out_dir=out_dir,
    )


def render_config(config: ExperimentConfig) -> str:
    """Inverse of parse_config: parse_config(render_config(c)) == c."""
    doc = {
        "individual": {"type": config.individual_type, "params": config.individual_params},
        "evaluator": {
            "kind": config.evaluator.kind,
            "params": config.evaluator.params,
            "objectives": [
                {"expr": o.expr, "direction": o.direction.value}
                for o in config.evaluator.fitness.objectives
            ],
        },
        "evolver": {
            "kind": config.evolver.kind,
            "params": {
                "layers": config.evolver.layers,
                "age_gap": config.evolver.age_gap,
                "layer_capacity": config.evolver.layer_capacity,
                "inflow_probability": config.evolver.inflow_probability,
                "crossover_rate": config.evolver.crossover_rate,
                "mutation": {
                    name: getattr(config.evolver.mutation, name)
                    for name in MutationRates.__dataclass_fields__
                },
            },
        },
        "selection": {
            "birth": {"kind": config.birth_selector.kind, "k": config.birth_selector.k},
            "death": {"kind": config.death_selector.kind, "k": config.death_selector.k},
        },
        "budget": {
            "max_evaluations": config.max_evaluations,
            "max_in_flight": config.max_in_flight,
        },
        "seed": config.seed,
        "out_dir": config.out_dir,
    }
    return json.dumps(doc, indent=2)


def with_overrides(
    config: ExperimentConfig,
    seed: int | None = None,
    max_evaluations: int | None = None,
    out_dir: str | None = None,
) -> ExperimentConfig:
    if seed is not None:
        config = replace(config, seed=seed)
    if max_evaluations is not None:
        config = replace(config, max_evaluations=max_evaluations)
    if out_dir is not None:
        config = replace(config, out_dir=out_dir)
    return config
