import pytest

from evoforge.fitness import (
    FitnessFunctionSpec,
    FitnessSpecError,
    MissingMetric,
    NonFiniteObjective,
    ObjectiveSpec,
)
from evoforge.objectives import Direction

MIN = Direction.MINIMIZE
MAX = Direction.MAXIMIZE


def spec(*pairs):
    return FitnessFunctionSpec(tuple(ObjectiveSpec(e, d) for e, d in pairs))


def test_single_metric_projection():
    s = spec(("projected_area_m2", MIN))
    ov = s.apply({"projected_area_m2": 0.04, "cargo_volume_m3": 0.01})
    assert ov.values == (0.04,)
    assert ov.directions == (MIN,)


def test_two_objective_composition():
    s = spec(("projected_area_m2", MIN), ("cargo_volume_m3", MAX))
    ov = s.apply({"projected_area_m2": 0.04, "cargo_volume_m3": 0.01})
    assert ov.values == (0.04, 0.01)
    assert ov.directions == (MIN, MAX)


def test_arithmetic_abs_and_constants():
    s = spec(("abs(a - b) * 2 + 1", MIN), ("a / b", MAX), ("-a", MIN))
    ov = s.apply({"a": 1.0, "b": 4.0})
    assert ov.values == (7.0, 0.25, -1.0)


def test_missing_metric():
    s = spec(("nope", MIN))
    with pytest.raises(MissingMetric):
        s.apply({"f": 1.0})


def test_nonfinite_objective():
    s = spec(("a / b", MIN))
    with pytest.raises(NonFiniteObjective):
        s.apply({"a": 1.0, "b": 0.0})


def test_expression_language_is_closed():
    for bad in ("__import__('os')", "a ** 2", "min(a, b)", "a[0]", "lambda: 1", "f'{a}'"):
        with pytest.raises(FitnessSpecError):
            ObjectiveSpec(bad, MIN)


def test_declared_metric_check():
    s = spec(("f", MIN), ("g + f", MIN))
    s.check_against(frozenset({"f", "g"}))
    with pytest.raises(FitnessSpecError):
        s.check_against(frozenset({"f"}))
    s.check_against(None)  # open metric set: nothing to verify
