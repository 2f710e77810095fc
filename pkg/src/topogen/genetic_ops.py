"""Exponential rank-based selection and similarity-based variation operators.

Selection samples items without replacement, one per round, with probability
proportional to ``exp(pressure * (rank - 1)) - 1`` where rank N is the most
desirable item of the N remaining.  Mutation and recombination never touch
raw bits: offspring are existing feasible designs, rank-selected by Hamming
similarity to one or two parents, so no repair step is ever needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence, TypeVar

import numpy as np

from .topology import DesignSpace

__all__ = [
    "Sense",
    "RankSelectConfig",
    "VariationConfig",
    "exp_rank_weight",
    "rank_select",
    "mutate",
    "recombine",
    "similarity_scores",
]

T = TypeVar("T")


class Sense(Enum):
    """Objective direction: which way 'better' points."""

    MINIMIZE = "min"
    MAXIMIZE = "max"


@dataclass(frozen=True)
class RankSelectConfig:
    """Selection pressure plus the direction in which scores improve."""

    pressure: float
    sense: Sense = Sense.MINIMIZE

    def __post_init__(self):
        if self.pressure <= 0:
            raise ValueError("selection pressure must be positive")


@dataclass(frozen=True)
class VariationConfig:
    """Parameters of the similarity-based mutation and recombination operators."""

    mutation_pressure: float = 1.3
    recombination_pressure: float = 2.0
    mutation_count: int = 30
    recombination_count: int = 10
    candidate_pool_size: int = 20000

    def __post_init__(self):
        for name in (
            "mutation_pressure",
            "recombination_pressure",
            "mutation_count",
            "recombination_count",
            "candidate_pool_size",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def exp_rank_weight(rank: int, pressure: float, pool_size: int) -> float:
    """Unnormalized selection weight ``exp(pressure*(rank-1)) - 1``.

    Rank 1 is the least desirable item and always has weight 0; dividing by
    the sum of weights over a pool yields the selection probabilities.
    """
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    if not 1 <= rank <= pool_size:
        raise ValueError(f"rank {rank} outside [1, {pool_size}]")
    if pressure <= 0:
        raise ValueError("pressure must be positive")
    return math.exp(pressure * (rank - 1)) - 1.0


def _ranks(scores: np.ndarray, sense: Sense) -> np.ndarray:
    """Rank 1 = worst ... rank N = best; ties keep pool order (earlier = worse)."""
    key = -scores if sense is Sense.MINIMIZE else scores
    order = np.argsort(key, kind="stable")
    ranks = np.empty(scores.size, dtype=np.int64)
    ranks[order] = np.arange(1, scores.size + 1)
    return ranks


def _rank_probabilities(ranks: np.ndarray, pressure: float) -> np.ndarray:
    # Same distribution as normalized exp_rank_weight, computed with all
    # exponents shifted <= 0 so pools of tens of thousands cannot overflow.
    n = ranks.size
    w = np.exp(pressure * (ranks.astype(np.float64) - n))
    w -= math.exp(pressure * (1.0 - n))
    np.clip(w, 0.0, None, out=w)
    return w / w.sum()


def _select_indices(
    scores: np.ndarray,
    sense: Sense,
    pressure: float,
    count: int,
    rng: np.random.Generator,
) -> list[int]:
    """Indices of `count` pool entries chosen by iterated rank selection."""
    remaining = np.arange(scores.size)
    chosen: list[int] = []
    for _ in range(min(count, scores.size)):
        if remaining.size == 1:
            pick = 0
        else:
            ranks = _ranks(scores[remaining], sense)
            cum = np.cumsum(_rank_probabilities(ranks, pressure))
            pick = int(np.searchsorted(cum, rng.random(), side="right"))
            if pick >= remaining.size:  # cumsum may top out below 1.0
                pick = remaining.size - 1
        chosen.append(int(remaining[pick]))
        remaining = np.delete(remaining, pick)
    return chosen


def rank_select(
    pool: Sequence[T],
    score: Callable[[T], float],
    config: RankSelectConfig,
    count: int,
    rng: np.random.Generator,
) -> list[T]:
    """Select ``min(count, len(pool))`` distinct pool entries without replacement.

    Each round ranks the remaining entries by score under ``config.sense``,
    samples one with probability proportional to :func:`exp_rank_weight`,
    and removes it.  A single remaining entry is selected deterministically.
    """
    if len(pool) == 0:
        raise ValueError("cannot select from an empty pool")
    if count < 1:
        raise ValueError("count must be >= 1")
    items = list(pool)
    scores = np.array([float(score(x)) for x in items], dtype=np.float64)
    idx = _select_indices(scores, config.sense, config.pressure, count, rng)
    return [items[i] for i in idx]


def similarity_scores(
    space: DesignSpace, parents: Sequence[int], candidate_ids: np.ndarray
) -> np.ndarray:
    """Mean Hamming distance from each candidate design to the given parents."""
    acc = np.zeros(len(candidate_ids), dtype=np.float64)
    for p in parents:
        acc += space.hamming_many(p, candidate_ids)
    return acc / len(parents)


def _eligible_ids(space: DesignSpace, excluded: set[int]) -> np.ndarray:
    mask = np.ones(len(space), dtype=bool)
    if excluded:
        mask[list(excluded)] = False
    return np.flatnonzero(mask)


def _draw_candidates(
    eligible: np.ndarray, pool_size: int, rng: np.random.Generator
) -> np.ndarray:
    if pool_size >= eligible.size:
        return eligible
    return rng.choice(eligible, size=pool_size, replace=False)


def _similarity_child(
    space: DesignSpace,
    parents: list[int],
    eligible: np.ndarray,
    config: VariationConfig,
    pressure: float,
    rng: np.random.Generator,
) -> int:
    if eligible.size == 0:
        # population covers all of F; fall back to excluding only the parents
        eligible = _eligible_ids(space, set(parents))
        if eligible.size == 0:
            raise ValueError("no candidate designs besides the parents")
    cand = _draw_candidates(eligible, config.candidate_pool_size, rng)
    dists = similarity_scores(space, parents, cand)
    pick = _select_indices(dists, Sense.MINIMIZE, pressure, 1, rng)[0]
    return int(cand[pick])


def mutate(
    population: Sequence[int],
    space: DesignSpace,
    config: VariationConfig,
    rng: np.random.Generator,
) -> list[int]:
    """Create ``mutation_count`` offspring design ids by similarity to one parent.

    For each offspring a uniform-random parent is drawn from the population
    and a candidate set of up to ``candidate_pool_size`` designs is drawn
    uniformly from the feasible set minus the current population; the child
    is rank-selected by Hamming distance to the parent (closer = better).
    The returned list may contain repeats; the caller deduplicates.
    """
    if not population:
        raise ValueError("population is empty")
    if len(space) < 2:
        raise ValueError("need at least 2 feasible designs to mutate")
    pop = list(population)
    eligible = _eligible_ids(space, set(pop))
    children = []
    for _ in range(config.mutation_count):
        parent = pop[int(rng.integers(len(pop)))]
        children.append(
            _similarity_child(
                space, [parent], eligible, config, config.mutation_pressure, rng
            )
        )
    return children


def recombine(
    population: Sequence[int],
    space: DesignSpace,
    config: VariationConfig,
    rng: np.random.Generator,
) -> list[int]:
    """Create ``recombination_count`` offspring scored by mean distance to two parents.

    Works like :func:`mutate` except each offspring draws two distinct
    parents and candidates are ranked by the average of both Hamming
    distances, with ``recombination_pressure``.
    """
    if len(population) < 2:
        raise ValueError("recombination needs at least 2 population members")
    if len(space) < 2:
        raise ValueError("need at least 2 feasible designs to recombine")
    pop = list(population)
    eligible = _eligible_ids(space, set(pop))
    children = []
    for _ in range(config.recombination_count):
        i1, i2 = rng.choice(len(pop), size=2, replace=False)
        parents = [pop[int(i1)], pop[int(i2)]]
        children.append(
            _similarity_child(
                space, parents, eligible, config, config.recombination_pressure, rng
            )
        )
    return children
