"""Neural network-assisted GA: surrogate-filtered evaluation of offspring.

The driver first evaluates a random learning set, tunes the surrogate's
hyperparameters once on it, and trains the first model.  Each iteration
then creates a large offspring batch, predicts the not-yet-evaluated
members with the surrogate, rank-selects a small subset for simulation,
selects the next population from simulated designs only, and retrains the
surrogate from scratch on the full archive.  If (re)training fails, that
iteration falls back to simulating a uniform-random subset.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ga_core import (
    Evaluator,
    RunLog,
    Termination,
    _Archiver,
    _stop_reason,
    rng_stream,
)
from .genetic_ops import (
    RankSelectConfig,
    Sense,
    VariationConfig,
    mutate,
    rank_select,
    recombine,
)
from .surrogate import (
    Hyperparams,
    Mlp,
    TrainConfig,
    TrainingError,
    predict_feedforward_many,
    predict_pairwise,
    prob_better_than_best,
    save_model,
    train,
    train_pairwise,
    tune,
)
from .topology import DesignSpace

__all__ = ["NnGaParams", "NnGaResult", "run_nn_ga"]


@dataclass(frozen=True)
class NnGaParams:
    """Parameters of the NN-assisted GA; defaults are the published values."""

    selection_pressure: float = 1.3
    mutation_pressure: float = 1.3
    recombination_pressure: float = 2.0
    population_size: int = 30
    candidate_pool_size: int = 20000
    mutation_count: int = 250
    recombination_count: int = 50
    initial_learning_set_size: int = 100
    evaluations_per_iteration: int = 40
    surrogate_variant: str = "feedforward"
    pairwise_references: int = 30
    tuning_trials: int = 50

    def __post_init__(self):
        if self.surrogate_variant not in ("feedforward", "pairwise"):
            raise ValueError(f"unknown surrogate variant {self.surrogate_variant!r}")
        if self.initial_learning_set_size < self.population_size:
            raise ValueError("initial learning set must be at least the population size")
        if self.evaluations_per_iteration > self.mutation_count + self.recombination_count:
            raise ValueError(
                "evaluations_per_iteration cannot exceed the offspring count"
            )
        for name in (
            "selection_pressure",
            "mutation_pressure",
            "recombination_pressure",
            "candidate_pool_size",
            "mutation_count",
            "recombination_count",
            "evaluations_per_iteration",
            "tuning_trials",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.pairwise_references < 2:
            raise ValueError("pairwise_references must be >= 2")

    def variation_config(self) -> VariationConfig:
        return VariationConfig(
            mutation_pressure=self.mutation_pressure,
            recombination_pressure=self.recombination_pressure,
            mutation_count=self.mutation_count,
            recombination_count=self.recombination_count,
            candidate_pool_size=self.candidate_pool_size,
        )


@dataclass
class NnGaResult:
    archive: list
    history: list[float]
    iterations: int
    stop_reason: str
    final_population: list[int]
    found_target: bool | None
    evaluations_to_target: int | None
    hyperparams: Hyperparams | None
    iteration_records: list[dict]


def _seed_base(seed) -> tuple:
    return (seed,) if isinstance(seed, int) else tuple(seed)


class _Surrogate:
    """Owns the model lifecycle: tune once, retrain per iteration, predict."""

    def __init__(self, space: DesignSpace, params: NnGaParams, seed, snapshot_dir):
        self.space = space
        self.params = params
        self.base = _seed_base(seed)
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None
        self.hp: Hyperparams | None = None
        self.model: Mlp | None = None
        self.val_loss: float | None = None
        self.X_all = space.chromosome_matrix.astype(np.float64)

    def tune_on(self, ids: list[int], fitness: dict[int, float]) -> None:
        X = self.X_all[ids]
        y = np.array([fitness[d] for d in ids])
        try:
            result = tune(
                X,
                y,
                variant=self.params.surrogate_variant,
                trials=self.params.tuning_trials,
                seed=self.base + (1000,),
            )
            self.hp = result.hyperparams
        except TrainingError:
            self.hp = Hyperparams()

    def retrain(self, ids: list[int], fitness: dict[int, float], iteration: int) -> bool:
        """Train a fresh model on the archive; False (and no model) on failure."""
        hp = self.hp or Hyperparams()
        width = self.space.chromosome_length
        if self.params.surrogate_variant == "pairwise":
            width *= 2
        model = Mlp(
            width,
            hp.hidden_units,
            seed=np.random.SeedSequence(self.base + (2000, iteration)),
            kind=self.params.surrogate_variant,
        )
        X = self.X_all[ids]
        y = np.array([fitness[d] for d in ids])
        cfg = TrainConfig(seed=self.base + (3000, iteration))
        try:
            if self.params.surrogate_variant == "pairwise":
                _, report = train_pairwise(model, X, y, hp, cfg)
            else:
                _, report = train(model, X, y, hp, cfg)
        except TrainingError:
            self.model = None
            self.val_loss = None
            return False
        self.model = model
        self.val_loss = report.best_val_loss
        if self.snapshot_dir is not None:
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
            save_model(model, self.snapshot_dir / f"model_iter{iteration:04d}.json")
        return True

    def scores(
        self,
        candidate_ids: list[int],
        archive_ids: list[int],
        fitness: dict[int, float],
        best: float,
        sense: Sense,
        rng: np.random.Generator,
    ) -> tuple[np.ndarray, Sense]:
        """Selection scores for unevaluated candidates plus the ranking direction."""
        if self.params.surrogate_variant == "feedforward":
            return predict_feedforward_many(self.model, self.X_all[candidate_ids]), sense
        references = [(self.X_all[d], fitness[d]) for d in archive_ids]
        eta = self.params.pairwise_references
        probs = np.empty(len(candidate_ids))
        for k, d in enumerate(candidate_ids):
            pred = predict_pairwise(self.model, self.X_all[d], references, eta, rng)
            probs[k] = prob_better_than_best(pred, best, sense)
        return probs, Sense.MAXIMIZE


def run_nn_ga(
    space: DesignSpace,
    evaluator: Evaluator,
    params: NnGaParams | None = None,
    termination: Termination | None = None,
    seed=0,
    log: RunLog | None = None,
    snapshot_dir=None,
) -> NnGaResult:
    """Run the surrogate-assisted GA until a termination criterion fires.

    Per iteration at most ``evaluations_per_iteration`` designs are
    simulated; every design entering the next population has simulated
    fitness.  The surrogate trains on the whole archive after each
    iteration.  Fixed seeds reproduce the archive bit for bit.
    """
    params = params or NnGaParams()
    termination = termination or Termination(max_iterations=1000)
    eps = params.initial_learning_set_size
    if len(space) < eps:
        raise ValueError(
            f"design space has {len(space)} designs, need >= learning set size {eps}"
        )

    archiver = _Archiver(space, evaluator, log, termination.target_design_ids)
    vc = params.variation_config()
    sel_cfg = RankSelectConfig(params.selection_pressure, evaluator.sense)
    surrogate = _Surrogate(space, params, seed, snapshot_dir)

    learn_rng = rng_stream(seed, 0, "learnset")
    learning_set = [int(d) for d in learn_rng.choice(len(space), size=eps, replace=False)]
    archiver.evaluate_new(learning_set, 0)
    history = [archiver.best]
    iteration = 0
    stagnant = 0
    iteration_records: list[dict] = []
    reason = _stop_reason(termination, archiver, iteration, stagnant)

    if reason is None:
        surrogate.tune_on(learning_set, archiver.fitness)
        surrogate.retrain(learning_set, archiver.fitness, 0)

    population = rank_select(
        learning_set,
        archiver.fitness.__getitem__,
        sel_cfg,
        params.population_size,
        rng_stream(seed, 0, "select"),
    )

    while reason is None:
        iteration += 1
        model_val_loss = surrogate.val_loss
        offs_r = recombine(population, space, vc, rng_stream(seed, iteration, "recombine"))
        merged = list(dict.fromkeys(population + offs_r))
        offs_m = mutate(merged, space, vc, rng_stream(seed, iteration, "mutate"))
        merged = list(dict.fromkeys(merged + offs_m))
        to_predict = [d for d in merged if d not in archiver.fitness]

        surrogate_failed = False
        if not to_predict:
            to_evaluate: list[int] = []
        elif surrogate.model is None:
            surrogate_failed = True
            fb_rng = rng_stream(seed, iteration, "fallback")
            k = min(params.evaluations_per_iteration, len(to_predict))
            to_evaluate = [
                to_predict[int(i)]
                for i in fb_rng.choice(len(to_predict), size=k, replace=False)
            ]
        else:
            archive_ids = [rec.design_id for rec in archiver.archive]
            scores, score_sense = surrogate.scores(
                to_predict,
                archive_ids,
                archiver.fitness,
                archiver.best,
                evaluator.sense,
                rng_stream(seed, iteration, "predict"),
            )
            by_id = dict(zip(to_predict, scores))
            to_evaluate = rank_select(
                to_predict,
                by_id.__getitem__,
                RankSelectConfig(params.selection_pressure, score_sense),
                params.evaluations_per_iteration,
                rng_stream(seed, iteration, "eval_select"),
            )

        n_evaluated = archiver.evaluate_new(to_evaluate, iteration)

        evaluated_pool = [d for d in merged if d in archiver.fitness]
        population = rank_select(
            evaluated_pool,
            archiver.fitness.__getitem__,
            sel_cfg,
            params.population_size,
            rng_stream(seed, iteration, "select"),
        )
        if len(population) < params.population_size:
            # cannot happen while the previous population is archived; guard anyway
            ranked = sorted(
                (d for d in archiver.fitness if d not in set(population)),
                key=lambda d: archiver.fitness[d],
                reverse=evaluator.sense is Sense.MAXIMIZE,
            )
            population += ranked[: params.population_size - len(population)]

        surrogate.retrain([rec.design_id for rec in archiver.archive],
                          archiver.fitness, iteration)

        record = {
            "iteration": iteration,
            "surrogate_val_loss": model_val_loss,
            "n_predicted": len(to_predict),
            "n_evaluated": n_evaluated,
            "surrogate_failed": surrogate_failed,
        }
        iteration_records.append(record)
        if log is not None:
            log.iteration(**record)

        improved = archiver.best != history[-1]
        stagnant = 0 if improved else stagnant + 1
        history.append(archiver.best)
        reason = _stop_reason(termination, archiver, iteration, stagnant)

    found = None
    if termination.target_design_ids is not None:
        found = archiver.target_hit_at is not None
    if log is not None:
        log.summary(found, archiver.target_hit_at, iteration)
    return NnGaResult(
        archive=archiver.archive,
        history=history,
        iterations=iteration,
        stop_reason=reason,
        final_population=population,
        found_target=found,
        evaluations_to_target=archiver.target_hit_at,
        hyperparams=surrogate.hp,
        iteration_records=iteration_records,
    )
