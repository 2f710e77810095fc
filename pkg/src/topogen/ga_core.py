"""Unassisted genetic algorithm driver over an enumerated design space.

Each iteration recombines, mutates, evaluates the not-yet-evaluated
offspring, and rank-selects the next population; survivors compete with
their parents because offspring are merged into the population (set union
on design ids).  An archive keeps one record per evaluated design, so no
design is ever simulated twice.  All randomness flows through per
(seed, iteration, operator) streams, making a run a pure function of its
seed regardless of evaluation parallelism.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .genetic_ops import (
    RankSelectConfig,
    Sense,
    VariationConfig,
    mutate,
    rank_select,
    recombine,
)
from .topology import Chromosome, DesignSpace

__all__ = [
    "GaParams",
    "EvaluationRecord",
    "Termination",
    "Evaluator",
    "GaAbort",
    "GaResult",
    "RunLog",
    "rng_stream",
    "run_ga",
]

_STREAM_TAGS = {
    "init": 0,
    "recombine": 1,
    "mutate": 2,
    "select": 3,
    "learnset": 4,
    "tune": 5,
    "train": 6,
    "predict": 7,
    "eval_select": 8,
    "fallback": 9,
}


def rng_stream(seed, iteration: int, tag: str) -> np.random.Generator:
    """Deterministic random stream for one (seed, iteration, operator) triple."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(iteration, _STREAM_TAGS[tag]))
    )


@dataclass(frozen=True)
class GaParams:
    """Parameters of the unassisted GA; defaults are the published values."""

    selection_pressure: float = 1.3
    mutation_pressure: float = 1.3
    recombination_pressure: float = 2.0
    population_size: int = 30
    candidate_pool_size: int = 20000
    mutation_count: int = 30
    recombination_count: int = 10

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        for name in (
            "selection_pressure",
            "mutation_pressure",
            "recombination_pressure",
            "candidate_pool_size",
            "mutation_count",
            "recombination_count",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def variation_config(self) -> VariationConfig:
        return VariationConfig(
            mutation_pressure=self.mutation_pressure,
            recombination_pressure=self.recombination_pressure,
            mutation_count=self.mutation_count,
            recombination_count=self.recombination_count,
            candidate_pool_size=self.candidate_pool_size,
        )


@dataclass
class EvaluationRecord:
    """One archived evaluation: identity, encoding, objective, and metadata."""

    design_id: int
    chromosome: Chromosome
    fitness: float
    evaluated_at_iteration: int
    wall_time: float


@dataclass(frozen=True)
class Termination:
    """Stop criteria; at least one must be set.

    ``target_design_ids`` stops the run once any of the given designs has
    been evaluated (benchmark mode with a known optimum); ``target_fitness``
    stops once the best evaluated fitness is at least as good.
    """

    max_iterations: int | None = None
    max_evaluations: int | None = None
    target_fitness: float | None = None
    target_design_ids: frozenset[int] | None = None
    stagnation_window: int | None = None

    def __post_init__(self):
        if (
            self.max_iterations is None
            and self.max_evaluations is None
            and self.target_fitness is None
            and self.target_design_ids is None
            and self.stagnation_window is None
        ):
            raise ValueError("at least one termination criterion must be set")


class Evaluator:
    """Fitness oracle: deterministic scalar objective per design id."""

    sense: Sense = Sense.MINIMIZE

    def evaluate(self, design_id: int) -> float:
        raise NotImplementedError

    def evaluate_many(self, design_ids: Sequence[int]) -> list[float]:
        return [self.evaluate(d) for d in design_ids]


class GaAbort(RuntimeError):
    """Evaluator failure; carries the archive built so far."""

    def __init__(self, message: str, archive: list[EvaluationRecord]):
        super().__init__(message)
        self.archive = archive


class RunLog:
    """JSONL run log: one record per evaluation plus a final summary record.

    Records are flushed per line so a partial log survives an abort.  No
    volatile data (wall times, timestamps) is written: re-running the same
    configuration and seed reproduces the file byte for byte.
    """

    def __init__(self, path: str | Path | IO[str]):
        if hasattr(path, "write"):
            self._fh = path
            self._owned = False
        else:
            self._fh = open(path, "w", newline="\n")
            self._owned = True

    def _write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        self._fh.flush()

    def eval(self, design_id: int, iteration: int, fitness: float, cumulative: int):
        self._write(
            {
                "design_id": design_id,
                "iteration": iteration,
                "fitness": fitness,
                "cumulative_evaluations": cumulative,
            }
        )

    def iteration(self, **fields):
        self._write(fields)

    def summary(self, found_optimum, evaluations_to_optimum, iterations):
        self._write(
            {
                "found_optimum": found_optimum,
                "evaluations_to_optimum": evaluations_to_optimum,
                "iterations": iterations,
            }
        )

    def close(self):
        if self._owned:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class GaResult:
    """Archive plus per-iteration best-so-far history and stop diagnostics."""

    archive: list[EvaluationRecord]
    history: list[float]
    iterations: int
    stop_reason: str
    final_population: list[int]
    found_target: bool | None
    evaluations_to_target: int | None


class _Archiver:
    """Evaluation bookkeeping shared by the GA drivers: cache, archive, log, target."""

    def __init__(self, space, evaluator, log, target_ids):
        self.space = space
        self.evaluator = evaluator
        self.log = log
        self.target_ids = target_ids
        self.fitness: dict[int, float] = {}
        self.archive: list[EvaluationRecord] = []
        self.target_hit_at: int | None = None
        self._better = min if evaluator.sense is Sense.MINIMIZE else max
        self.best: float | None = None

    def evaluate_new(self, ids, iteration: int) -> int:
        """Evaluate the not-yet-archived ids in ascending design-id order."""
        new = sorted(d for d in set(ids) if d not in self.fitness)
        if not new:
            return 0
        t0 = time.perf_counter()
        try:
            values = self.evaluator.evaluate_many(new)
        except Exception as e:
            raise GaAbort(f"evaluator failed on {len(new)} designs: {e}", self.archive) from e
        per_call = (time.perf_counter() - t0) / len(new)
        for d, f in zip(new, values):
            f = float(f)
            if not math.isfinite(f):
                raise GaAbort(f"evaluator returned non-finite fitness for design {d}", self.archive)
            self.fitness[d] = f
            self.archive.append(
                EvaluationRecord(d, self.space.chromosome(d), f, iteration, per_call)
            )
            self.best = f if self.best is None else self._better(self.best, f)
            if self.target_ids and d in self.target_ids and self.target_hit_at is None:
                self.target_hit_at = len(self.archive)
            if self.log is not None:
                self.log.eval(d, iteration, f, len(self.archive))
        return len(new)

    def fitness_reached(self, target: float) -> bool:
        if self.best is None:
            return False
        if self.evaluator.sense is Sense.MINIMIZE:
            return self.best <= target
        return self.best >= target


def _stop_reason(
    termination: Termination, archiver: _Archiver, iteration: int, stagnant: int
) -> str | None:
    t = termination
    if t.target_design_ids is not None and archiver.target_hit_at is not None:
        return "target_design"
    if t.target_fitness is not None and archiver.fitness_reached(t.target_fitness):
        return "target_fitness"
    if t.max_evaluations is not None and len(archiver.archive) >= t.max_evaluations:
        return "max_evaluations"
    if t.max_iterations is not None and iteration >= t.max_iterations:
        return "max_iterations"
    if t.stagnation_window is not None and stagnant >= t.stagnation_window:
        return "stagnation"
    return None


def run_ga(
    space: DesignSpace,
    evaluator: Evaluator,
    params: GaParams | None = None,
    termination: Termination | None = None,
    seed=0,
    log: RunLog | None = None,
) -> GaResult:
    """Run the similarity-based GA until a termination criterion fires.

    The initial population is drawn uniformly without replacement.  Each
    iteration: recombination offspring are merged into the population, the
    merged set is mutated, newly seen designs are evaluated (cached fitness
    is reused for everything else), and the next population of
    ``population_size`` designs is rank-selected by fitness.
    """
    params = params or GaParams()
    termination = termination or Termination(max_iterations=1000)
    if len(space) < params.population_size:
        raise ValueError(
            f"design space has {len(space)} designs, need >= population size "
            f"{params.population_size}"
        )

    archiver = _Archiver(space, evaluator, log, termination.target_design_ids)
    vc = params.variation_config()
    sel_cfg = RankSelectConfig(params.selection_pressure, evaluator.sense)

    init_rng = rng_stream(seed, 0, "init")
    population = [
        int(d)
        for d in init_rng.choice(len(space), size=params.population_size, replace=False)
    ]
    archiver.evaluate_new(population, 0)
    history = [archiver.best]
    stagnant = 0
    iteration = 0
    reason = _stop_reason(termination, archiver, iteration, stagnant)

    while reason is None:
        iteration += 1
        offs_r = recombine(population, space, vc, rng_stream(seed, iteration, "recombine"))
        merged = list(dict.fromkeys(population + offs_r))
        offs_m = mutate(merged, space, vc, rng_stream(seed, iteration, "mutate"))
        merged = list(dict.fromkeys(merged + offs_m))
        archiver.evaluate_new(merged, iteration)
        population = rank_select(
            merged,
            archiver.fitness.__getitem__,
            sel_cfg,
            params.population_size,
            rng_stream(seed, iteration, "select"),
        )
        improved = archiver.best != history[-1]
        stagnant = 0 if improved else stagnant + 1
        history.append(archiver.best)
        reason = _stop_reason(termination, archiver, iteration, stagnant)

    found = None
    if termination.target_design_ids is not None:
        found = archiver.target_hit_at is not None
    if log is not None:
        log.summary(found, archiver.target_hit_at, iteration)
    return GaResult(
        archive=archiver.archive,
        history=history,
        iterations=iteration,
        stop_reason=reason,
        final_population=population,
        found_target=found,
        evaluations_to_target=archiver.target_hit_at,
    )
