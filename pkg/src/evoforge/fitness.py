"""Declarative fitness functions: metric expressions -> objective vector.

The expression language is deliberately tiny (metric names, numeric
constants, + - * /, unary minus, and abs()) so experiment configs stay
data, not code.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass

from .objectives import Direction, ObjectiveVector


class FitnessSpecError(ValueError):
    """Bad objective expression or unknown metric reference."""


class MissingMetric(KeyError):
    """Expression references a metric the result does not carry."""


class NonFiniteObjective(ValueError):
    """Expression evaluated to NaN or infinity."""


_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div)


def _check_expr(node: ast.AST, names: set[str]):
    if isinstance(node, ast.Expression):
        _check_expr(node.body, names)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
        _check_expr(node.left, names)
        _check_expr(node.right, names)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _check_expr(node.operand, names)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id == "abs" and len(node.args) == 1 and not node.keywords):
            raise FitnessSpecError("only abs(<expr>) calls are allowed")
        _check_expr(node.args[0], names)
    elif isinstance(node, ast.Name):
        names.add(node.id)
    elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        pass
    else:
        raise FitnessSpecError(f"unsupported expression element: {ast.dump(node)}")


def _eval_expr(node: ast.AST, metrics: dict[str, float]) -> float:
    if isinstance(node, ast.Expression):
        return _eval_expr(node.body, metrics)
    if isinstance(node, ast.BinOp):
        left = _eval_expr(node.left, metrics)
        right = _eval_expr(node.right, metrics)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        return left / right
    if isinstance(node, ast.UnaryOp):
        val = _eval_expr(node.operand, metrics)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.Call):
        return abs(_eval_expr(node.args[0], metrics))
    if isinstance(node, ast.Name):
        if node.id not in metrics:
            raise MissingMetric(node.id)
        return float(metrics[node.id])
    return float(node.value)  # ast.Constant


@dataclass(frozen=True)
class ObjectiveSpec:
    expr: str
    direction: Direction

    def __post_init__(self):
        tree = _parse(self.expr)
        names: set[str] = set()
        _check_expr(tree, names)
        object.__setattr__(self, "_tree", tree)
        object.__setattr__(self, "_names", frozenset(names))

    @property
    def metric_names(self) -> frozenset[str]:
        return self._names  # type: ignore[attr-defined]

    def evaluate(self, metrics: dict[str, float]) -> float:
        return _eval_expr(self._tree, metrics)  # type: ignore[attr-defined]


def _parse(expr: str) -> ast.Expression:
    try:
        return ast.parse(expr, mode="eval")
    except SyntaxError as e:
        raise FitnessSpecError(f"bad objective expression {expr!r}: {e}") from e


@dataclass(frozen=True)
class FitnessFunctionSpec:
    objectives: tuple[ObjectiveSpec, ...]

    def __post_init__(self):
        if not self.objectives:
            raise FitnessSpecError("at least one objective is required")

    @property
    def directions(self) -> tuple[Direction, ...]:
        return tuple(o.direction for o in self.objectives)

    def referenced_metrics(self) -> frozenset[str]:
        return frozenset().union(*(o.metric_names for o in self.objectives))

    def check_against(self, declared_metrics: frozenset[str] | None):
        """Validate metric references against an evaluator's declared set."""
        if declared_metrics is None:
            return
        unknown = self.referenced_metrics() - declared_metrics
        if unknown:
            raise FitnessSpecError(
                f"objectives reference undeclared metrics: {sorted(unknown)}"
            )

    def apply(self, metrics: dict[str, float]) -> ObjectiveVector:
        values = []
        for spec in self.objectives:
            try:
                v = spec.evaluate(metrics)
            except ZeroDivisionError:
                raise NonFiniteObjective(f"objective {spec.expr!r} divides by zero")
            if not math.isfinite(v):
                raise NonFiniteObjective(f"objective {spec.expr!r} evaluated to {v!r}")
            values.append(float(v))
        return ObjectiveVector(tuple(values), self.directions)
