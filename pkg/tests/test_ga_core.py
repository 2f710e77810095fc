from __future__ import annotations

import json

import numpy as np
import pytest

from topogen.ga_core import (
    Evaluator,
    GaAbort,
    GaParams,
    RunLog,
    Termination,
    run_ga,
)
from topogen.genetic_ops import Sense
from topogen.loop_layout import LoopParams, fitness, loop_permutations


class CountingTableEvaluator(Evaluator):
    """Table-backed evaluator that records every id it is asked to simulate."""

    sense = Sense.MINIMIZE

    def __init__(self, table):
        self.table = list(table)
        self.calls: list[int] = []

    def evaluate(self, design_id: int) -> float:
        self.calls.append(design_id)
        return float(self.table[design_id])


class FailingEvaluator(Evaluator):
    sense = Sense.MINIMIZE

    def __init__(self, fail_after: int):
        self.fail_after = fail_after
        self.count = 0

    def evaluate(self, design_id: int) -> float:
        self.count += 1
        if self.count > self.fail_after:
            raise RuntimeError("simulator crashed")
        return float(design_id)


@pytest.fixture(scope="module")
def loop4_table():
    return [fitness(p, LoopParams(), seed=20260808) for p in loop_permutations(4)]


def small_params(**overrides):
    defaults = dict(population_size=6, mutation_count=6, recombination_count=3,
                    candidate_pool_size=50)
    defaults.update(overrides)
    return GaParams(**defaults)


def test_no_design_is_ever_evaluated_twice(loop4_space, loop4_table):
    ev = CountingTableEvaluator(loop4_table)
    result = run_ga(loop4_space, ev, small_params(),
                    Termination(max_iterations=20), seed=1)
    assert len(ev.calls) == len(set(ev.calls))
    assert len(ev.calls) == len(result.archive)
    assert sorted(ev.calls) == sorted(r.design_id for r in result.archive)


def test_zero_iterations_returns_evaluated_initial_population(loop4_space, loop4_table):
    ev = CountingTableEvaluator(loop4_table)
    result = run_ga(loop4_space, ev, small_params(),
                    Termination(max_iterations=0), seed=3)
    assert result.iterations == 0
    assert result.stop_reason == "max_iterations"
    assert len(result.archive) == 6
    assert all(r.evaluated_at_iteration == 0 for r in result.archive)


def test_exhaustive_initial_sample_hits_target_at_iteration_zero(loop3_space):
    table = [fitness(p, LoopParams(), seed=20260808) for p in loop_permutations(3)]
    best = int(np.argmin(table))
    ev = CountingTableEvaluator(table)
    result = run_ga(
        loop3_space,
        ev,
        small_params(population_size=6),
        Termination(max_iterations=100, target_design_ids=frozenset({best})),
        seed=5,
    )
    assert result.iterations == 0
    assert result.stop_reason == "target_design"
    assert result.found_target is True
    assert result.evaluations_to_target is not None


def test_population_smaller_than_space_required(loop3_space):
    ev = CountingTableEvaluator(range(6))
    with pytest.raises(ValueError, match="population size"):
        run_ga(loop3_space, ev, GaParams(population_size=30),
               Termination(max_iterations=1), seed=0)


def test_fixed_seed_reproduces_archive_and_history(loop4_space, loop4_table):
    def once():
        ev = CountingTableEvaluator(loop4_table)
        r = run_ga(loop4_space, ev, small_params(),
                   Termination(max_iterations=10), seed=(9, 2))
        return (
            [(rec.design_id, rec.fitness, rec.evaluated_at_iteration) for rec in r.archive],
            r.history,
            r.final_population,
            r.iterations,
        )

    assert once() == once()


def test_selected_population_is_evaluated_subset(loop4_space, loop4_table):
    ev = CountingTableEvaluator(loop4_table)
    result = run_ga(loop4_space, ev, small_params(),
                    Termination(max_iterations=5), seed=11)
    evaluated = {r.design_id for r in result.archive}
    assert len(result.final_population) == 6
    assert set(result.final_population) <= evaluated


def test_history_is_best_so_far(loop4_space, loop4_table):
    ev = CountingTableEvaluator(loop4_table)
    result = run_ga(loop4_space, ev, small_params(),
                    Termination(max_iterations=8), seed=13)
    assert len(result.history) == result.iterations + 1
    assert all(b <= a for a, b in zip(result.history, result.history[1:]))
    assert result.history[-1] == min(r.fitness for r in result.archive)


def test_iterations_without_new_designs_still_complete(loop3_space):
    # 6-design space with a 6-member population: offspring are all cached
    table = list(range(6))
    ev = CountingTableEvaluator(table)
    result = run_ga(loop3_space, ev, small_params(population_size=6),
                    Termination(max_iterations=4), seed=2)
    assert result.iterations == 4
    assert len(result.archive) == 6  # nothing new after the initial population


def test_target_fitness_untyped_stop(loop4_space, loop4_table):
    ev = CountingTableEvaluator(loop4_table)
    result = run_ga(loop4_space, ev, small_params(),
                    Termination(max_iterations=200, target_fitness=min(loop4_table)),
                    seed=17)
    assert result.stop_reason == "target_fitness"
    assert min(r.fitness for r in result.archive) == min(loop4_table)


def test_max_evaluations_stop(loop4_space, loop4_table):
    ev = CountingTableEvaluator(loop4_table)
    result = run_ga(loop4_space, ev, small_params(),
                    Termination(max_evaluations=10, max_iterations=50), seed=19)
    assert result.stop_reason == "max_evaluations"
    assert len(result.archive) >= 10


def test_stagnation_stop(loop4_space):
    ev = CountingTableEvaluator([1.0] * 24)  # flat fitness cannot improve
    result = run_ga(loop4_space, ev, small_params(),
                    Termination(max_iterations=100, stagnation_window=3), seed=23)
    assert result.stop_reason == "stagnation"
    assert result.iterations <= 5


def test_evaluator_failure_aborts_with_partial_archive(loop4_space, tmp_path):
    log_path = tmp_path / "run.jsonl"
    ev = FailingEvaluator(fail_after=8)
    with RunLog(log_path) as log:
        with pytest.raises(GaAbort) as err:
            run_ga(loop4_space, ev, small_params(),
                   Termination(max_iterations=50), seed=29, log=log)
    archive = err.value.archive
    assert 0 < len(archive) <= 8
    lines = log_path.read_text().splitlines()
    assert len(lines) == len(archive)  # flushed per evaluation


def test_termination_requires_a_criterion():
    with pytest.raises(ValueError):
        Termination()


def test_params_validation():
    with pytest.raises(ValueError):
        GaParams(population_size=1)
    with pytest.raises(ValueError):
        GaParams(mutation_count=0)


def test_run_log_format_and_summary(loop4_space, loop4_table, tmp_path):
    path = tmp_path / "log.jsonl"
    ev = CountingTableEvaluator(loop4_table)
    best = int(np.argmin(loop4_table))
    with RunLog(path) as log:
        run_ga(loop4_space, ev, small_params(),
               Termination(max_iterations=100, target_design_ids=frozenset({best})),
               seed=31, log=log)
    records = [json.loads(x) for x in path.read_text().splitlines()]
    evals = [r for r in records if "design_id" in r]
    summary = records[-1]
    assert summary["found_optimum"] is True
    assert summary["evaluations_to_optimum"] <= len(evals)
    assert [r["cumulative_evaluations"] for r in evals] == list(range(1, len(evals) + 1))
    assert evals[summary["evaluations_to_optimum"] - 1]["design_id"] == best


def test_run_log_bytes_are_reproducible(loop4_space, loop4_table, tmp_path):
    def once(path):
        ev = CountingTableEvaluator(loop4_table)
        with RunLog(path) as log:
            run_ga(loop4_space, ev, small_params(),
                   Termination(max_iterations=6), seed=37, log=log)
        return path.read_bytes()

    assert once(tmp_path / "a.jsonl") == once(tmp_path / "b.jsonl")
