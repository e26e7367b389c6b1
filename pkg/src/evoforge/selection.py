"""Birth and death selectors: tournament, roulette, and NSGA-II
ranking/crowding.

All tie-breaks go through individual ids, never list position, so a
reshuffled population selects identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

from .objectives import Direction, ObjectiveVector, dominates
from .rng import RngStream


class Evaluated(Protocol):
    id: int
    objectives: ObjectiveVector


class InvalidFitnessForRoulette(ValueError):
    """Roulette needs nonnegative Maximize fitnesses with a positive sum."""


# ---------------------------------------------------------------------------
# ranking and crowding (NSGA-II)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrontRanking:
    rank: tuple[int, ...]
    crowding: tuple[float, ...]

    def fronts(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(max(self.rank) + 1)] if self.rank else []
        for i, r in enumerate(self.rank):
            out[r].append(i)
        return out


def nondominated_sort(objectives: Sequence[ObjectiveVector]) -> FrontRanking:
    """Fast non-dominated sort; rank 0 is the Pareto front.  Crowding is
    computed within each front."""
    n = len(objectives)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = [0] * n
    rank = [0] * n
    current = []
    for p in range(n):
        for q in range(p + 1, n):
            if dominates(objectives[p], objectives[q]):
                dominated_by[p].append(q)
                domination_count[q] += 1
            elif dominates(objectives[q], objectives[p]):
                dominated_by[q].append(p)
                domination_count[p] += 1
    for p in range(n):
        if domination_count[p] == 0:
            rank[p] = 0
            current.append(p)
    r = 0
    while current:
        nxt = []
        for p in current:
            for q in dominated_by[p]:
                domination_count[q] -= 1
                if domination_count[q] == 0:
                    rank[q] = r + 1
                    nxt.append(q)
        r += 1
        current = nxt
    crowding = [0.0] * n
    fronts: dict[int, list[int]] = {}
    for i, rk in enumerate(rank):
        fronts.setdefault(rk, []).append(i)
    for members in fronts.values():
        dist = crowding_distance([objectives[i] for i in members])
        for i, d in zip(members, dist):
            crowding[i] = d
    return FrontRanking(tuple(rank), tuple(crowding))


def crowding_distance(front: Sequence[ObjectiveVector]) -> list[float]:
    """NSGA-II crowding: boundary members are Infinite per objective;
    interior members accumulate neighbor span over objective range;
    zero-range objectives contribute nothing."""
    n = len(front)
    if n == 0:
        return []
    if n <= 2:
        return [math.inf] * n
    dist = [0.0] * n
    m = len(front[0])
    for k in range(m):
        order = sorted(range(n), key=lambda i: front[i].values[k])
        lo = front[order[0]].values[k]
        hi = front[order[-1]].values[k]
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        span = hi - lo
        if span <= 0.0:
            continue
        for pos in range(1, n - 1):
            i = order[pos]
            if dist[i] == math.inf:
                continue
            prev_v = front[order[pos - 1]].values[k]
            next_v = front[order[pos + 1]].values[k]
            dist[i] += (next_v - prev_v) / span
    return dist


# ---------------------------------------------------------------------------
# classic selectors
# ---------------------------------------------------------------------------

def _beats(a: Evaluated, b: Evaluated) -> bool:
    """Direction-aware 'a strictly better than b' with id tie-break."""
    if dominates(a.objectives, b.objectives):
        return True
    if dominates(b.objectives, a.objectives):
        return False
    return a.id < b.id


def tournament_select(members: Sequence[Evaluated], k: int, rng: RngStream) -> int:
    """Best of k uniform draws without replacement; ties broken by lower id."""
    if not members:
        raise ValueError("tournament_select on an empty population")
    if not 1 <= k <= len(members):
        raise ValueError("tournament size must be in [1, len(members)]")
    draws = rng.sample_indices(len(members), k)
    best = draws[0]
    for i in draws[1:]:
        if _beats(members[i], members[best]):
            best = i
    return best


def tournament_select_worst(members: Sequence[Evaluated], k: int, rng: RngStream) -> int:
    """Death-side mirror: worst of k draws, ties broken by higher id."""
    if not members:
        raise ValueError("tournament_select_worst on an empty population")
    k = min(k, len(members))
    draws = rng.sample_indices(len(members), k)
    worst = draws[0]
    for i in draws[1:]:
        m, w = members[i], members[worst]
        if dominates(w.objectives, m.objectives) or (
            not dominates(m.objectives, w.objectives) and m.id > w.id
        ):
            worst = i
    return worst


def roulette_select(members: Sequence[Evaluated], rng: RngStream) -> int:
    """Fitness-proportional draw; requires a single nonnegative Maximize
    objective with positive total."""
    if not members:
        raise ValueError("roulette_select on an empty population")
    fitnesses = []
    for m in members:
        obj = m.objectives
        if len(obj) != 1 or obj.directions[0] is not Direction.MAXIMIZE:
            raise InvalidFitnessForRoulette("roulette requires a single Maximize objective")
        if obj.values[0] < 0.0:
            raise InvalidFitnessForRoulette("roulette requires nonnegative fitnesses")
        fitnesses.append(obj.values[0])
    total = sum(fitnesses)
    if total <= 0.0:
        raise InvalidFitnessForRoulette("roulette requires a positive fitness total")
    return rng.weighted_index(fitnesses)


def roulette_select_death(members: Sequence[Evaluated], rng: RngStream) -> int:
    """Inverse-proportional victim draw (uniform when all fitnesses tie)."""
    if not members:
        raise ValueError("roulette_select_death on an empty population")
    vals = []
    for m in members:
        obj = m.objectives
        if len(obj) != 1 or obj.directions[0] is not Direction.MAXIMIZE:
            raise InvalidFitnessForRoulette("roulette requires a single Maximize objective")
        vals.append(obj.values[0])
    worst, best = min(vals), max(vals)
    if best - worst <= 0.0:
        return rng.randrange(len(members))
    weights = [best - v for v in vals]
    return rng.weighted_index(weights)


# ---------------------------------------------------------------------------
# NSGA-II selectors
# ---------------------------------------------------------------------------

def nsga2_birth_select(members: Sequence[Evaluated], rng: RngStream) -> int:
    """Binary tournament on (lower rank, higher crowding, lower id)."""
    if not members:
        raise ValueError("nsga2_birth_select on an empty population")
    ranking = nondominated_sort([m.objectives for m in members])
    if len(members) == 1:
        return 0
    a, b = rng.sample_indices(len(members), 2)
    key_a = (ranking.rank[a], -ranking.crowding[a], members[a].id)
    key_b = (ranking.rank[b], -ranking.crowding[b], members[b].id)
    return a if key_a <= key_b else b


def nsga2_death_select(members: Sequence[Evaluated]) -> int:
    """Victim: highest rank, then lowest crowding, then higher id."""
    if not members:
        raise ValueError("nsga2_death_select on an empty population")
    ranking = nondominated_sort([m.objectives for m in members])
    return max(
        range(len(members)),
        key=lambda i: (ranking.rank[i], -ranking.crowding[i], members[i].id),
    )


# ---------------------------------------------------------------------------
# config-driven dispatch
# ---------------------------------------------------------------------------

def birth_select(kind: str, k: int, members: Sequence[Evaluated], rng: RngStream) -> int:
    if kind == "tournament":
        return tournament_select(members, min(k, len(members)), rng)
    if kind == "roulette":
        return roulette_select(members, rng)
    if kind == "nsga2":
        return nsga2_birth_select(members, rng)
    raise ValueError(f"unknown birth selector {kind!r}")


def death_select(kind: str, k: int, members: Sequence[Evaluated], rng: RngStream) -> int:
    if kind == "tournament":
        return tournament_select_worst(members, k, rng)
    if kind == "roulette":
        return roulette_select_death(members, rng)
    if kind == "nsga2":
        return nsga2_death_select(members)
    raise ValueError(f"unknown death selector {kind!r}")
