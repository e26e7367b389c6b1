"""Objective vectors with per-entry optimization directions.

Objectives are stored raw; every comparison goes through the
direction-aware helpers here so no caller ever flips signs by hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Direction(Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


@dataclass(frozen=True)
class ObjectiveVector:
    values: tuple[float, ...]
    directions: tuple[Direction, ...]

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError("objective vector must be non-empty")
        if len(self.values) != len(self.directions):
            raise ValueError("values and directions must have equal length")
        for v in self.values:
            if not math.isfinite(v):
                raise ValueError(f"objective value must be finite, got {v!r}")

    def __len__(self) -> int:
        return len(self.values)

    def as_minimization(self) -> tuple[float, ...]:
        """Values with Maximize entries negated, so smaller is always better."""
        return tuple(
            v if d is Direction.MINIMIZE else -v
            for v, d in zip(self.values, self.directions)
        )


def scalar_better(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """True iff single-objective a is strictly better than b."""
    if len(a) != 1 or len(b) != 1:
        raise ValueError("scalar_better() applies to single-objective vectors only")
    if a.directions != b.directions:
        raise ValueError("mismatched objective directions")
    if a.directions[0] is Direction.MINIMIZE:
        return a.values[0] < b.values[0]
    return a.values[0] > b.values[0]


def scalar_not_worse(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    return not scalar_better(b, a)


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """Pareto dominance: a no worse everywhere and strictly better somewhere."""
    if a.directions != b.directions:
        raise ValueError("mismatched objective directions")
    am, bm = a.as_minimization(), b.as_minimization()
    no_worse = all(x <= y for x, y in zip(am, bm))
    strictly = any(x < y for x, y in zip(am, bm))
    return no_worse and strictly


def better(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """Direction-aware 'strictly better': scalar compare or Pareto dominance."""
    if len(a) == 1:
        return scalar_better(a, b)
    return dominates(a, b)
