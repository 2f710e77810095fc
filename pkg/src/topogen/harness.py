"""Experiment harness: exhaustive oracles, repeated runs, statistics, reports.

An experiment runs one algorithm on one benchmark for a number of
independent runs with per-run seeds split from a master seed, writes one
JSONL log per run plus a summary CSV, and aggregates evaluations-to-optimum
over the successful runs.  "Optimum found" means the evaluated design id
matches the oracle's rank-1 design (fitness ties are detected and every
tied design counts), never a floating-point fitness comparison.

Because the simulation objective is deterministic per design (common random
numbers), experiments replay fitness from an oracle table when one is
available; results are identical to live simulation, simulator calls are
simply cached across runs.
"""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ga_core import Evaluator, GaParams, RunLog, Termination, run_ga
from .genetic_ops import Sense
from .loop_layout import LoopParams, fitness as loop_fitness, generate_design_space, loop_permutations
from .nn_ga import NnGaParams, run_nn_ga
from .topology import DesignSpace, load_design_space

__all__ = [
    "LoopBenchmark",
    "TableBenchmark",
    "TableEvaluator",
    "OracleResult",
    "RunSummary",
    "ExperimentConfig",
    "ExperimentResult",
    "exhaustive",
    "load_oracle",
    "load_fitness_table",
    "run_experiment",
    "report",
]


class TableEvaluator(Evaluator):
    """Replays fitness from a design_id-indexed table; no simulator involved."""

    def __init__(self, table: np.ndarray, sense: Sense = Sense.MINIMIZE):
        self.table = np.asarray(table, dtype=np.float64)
        self.sense = sense

    def evaluate(self, design_id: int) -> float:
        return float(self.table[design_id])

    def evaluate_many(self, design_ids):
        return [float(self.table[d]) for d in design_ids]


@dataclass(frozen=True)
class LoopBenchmark:
    """The n-machine loop-layout benchmark (sense: minimize mean cycle time)."""

    machines: int
    params: LoopParams = field(default_factory=LoopParams)

    sense = Sense.MINIMIZE

    def label(self) -> str:
        return f"loop({self.machines})"

    def space(self) -> DesignSpace:
        return generate_design_space(self.machines)

    def n_designs(self) -> int:
        import math

        return math.factorial(self.machines)


@dataclass(frozen=True)
class TableBenchmark:
    """An externally supplied design space plus a design_id -> fitness table."""

    space_path: str
    fitness_path: str
    sense: Sense = Sense.MINIMIZE

    def label(self) -> str:
        return f"table({Path(self.fitness_path).name})"

    def space(self) -> DesignSpace:
        return load_design_space(self.space_path)

    def table(self) -> np.ndarray:
        return load_fitness_table(self.fitness_path)


@dataclass
class OracleResult:
    """Exhaustive evaluation of a benchmark: fitness and rank per design id."""

    fitness: np.ndarray
    ranks: np.ndarray
    sense: Sense
    best_id: int
    tie_ids: tuple[int, ...]

    @property
    def has_ties(self) -> bool:
        return len(self.tie_ids) > 1


def _rank_table(fitness: np.ndarray, sense: Sense) -> OracleResult:
    n = len(fitness)
    key = fitness if sense is Sense.MINIMIZE else -fitness
    order = np.lexsort((np.arange(n), key))
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(1, n + 1)
    best_id = int(order[0])
    ties = np.flatnonzero(fitness == fitness[best_id])
    return OracleResult(
        fitness=fitness,
        ranks=ranks,
        sense=sense,
        best_id=best_id,
        tie_ids=tuple(int(t) for t in ties),
    )


# -- exhaustive sweeps --------------------------------------------------------

_SWEEP_STATE: dict = {}


def _init_sweep_worker(machines: int, params: LoopParams, seed: int) -> None:
    _SWEEP_STATE["perms"] = loop_permutations(machines)
    _SWEEP_STATE["params"] = params
    _SWEEP_STATE["seed"] = seed


def _sweep_chunk(bounds: tuple[int, int]) -> list[float]:
    perms = _SWEEP_STATE["perms"]
    params = _SWEEP_STATE["params"]
    seed = _SWEEP_STATE["seed"]
    return [loop_fitness(perms[k], params, seed) for k in range(bounds[0], bounds[1])]


def exhaustive(
    benchmark: LoopBenchmark | TableBenchmark,
    seed: int = 0,
    workers: int = 1,
    out_path: str | Path | None = None,
) -> OracleResult:
    """Simulate every design once (common random numbers) and rank them.

    For a table benchmark the table already is the exhaustive evaluation and
    is only ranked.  With ``out_path`` the oracle CSV is written; re-running
    with the same seed reproduces it byte for byte.
    """
    if isinstance(benchmark, TableBenchmark):
        fitness = benchmark.table()
        oracle = _rank_table(fitness, benchmark.sense)
        if out_path is not None:
            _write_oracle_csv(out_path, oracle, None)
        return oracle

    n_designs = benchmark.n_designs()
    chunk = max(1, min(512, n_designs // max(1, 4 * workers) or 1))
    bounds = [(lo, min(lo + chunk, n_designs)) for lo in range(0, n_designs, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_init_sweep_worker,
            initargs=(benchmark.machines, benchmark.params, seed),
        ) as pool:
            chunks = list(pool.map(_sweep_chunk, bounds))
    else:
        _init_sweep_worker(benchmark.machines, benchmark.params, seed)
        chunks = [_sweep_chunk(b) for b in bounds]
    fitness = np.array([f for ch in chunks for f in ch], dtype=np.float64)
    oracle = _rank_table(fitness, benchmark.sense)
    if out_path is not None:
        _write_oracle_csv(out_path, oracle, loop_permutations(benchmark.machines))
    return oracle


def _write_oracle_csv(path, oracle: OracleResult, permutations) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        if permutations is not None:
            fh.write("design_id,permutation,mean_cycle_time,rank\n")
            for d in range(len(oracle.fitness)):
                perm = "-".join(str(m) for m in permutations[d])
                fh.write(f"{d},{perm},{float(oracle.fitness[d])!r},{oracle.ranks[d]}\n")
        else:
            fh.write("design_id,fitness,rank\n")
            for d in range(len(oracle.fitness)):
                fh.write(f"{d},{float(oracle.fitness[d])!r},{oracle.ranks[d]}\n")


def load_oracle(path: str | Path, sense: Sense = Sense.MINIMIZE) -> OracleResult:
    """Load an oracle CSV produced by :func:`exhaustive`."""
    path = Path(path)
    fitness_by_id: dict[int, float] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        value_col = "mean_cycle_time" if "mean_cycle_time" in cols else "fitness"
        for row in reader:
            fitness_by_id[int(row["design_id"])] = float(row[value_col])
    n = len(fitness_by_id)
    fitness = np.array([fitness_by_id[d] for d in range(n)])
    return _rank_table(fitness, sense)


def load_fitness_table(path: str | Path) -> np.ndarray:
    """Load an external design_id,fitness CSV into a dense array."""
    by_id: dict[int, float] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_id[int(row["design_id"])] = float(row["fitness"])
    if sorted(by_id) != list(range(len(by_id))):
        raise ValueError(f"{path}: design ids must be dense 0..N-1")
    return np.array([by_id[d] for d in range(len(by_id))])


# -- experiments ---------------------------------------------------------------


@dataclass
class RunSummary:
    run_index: int
    found_optimum: bool
    evaluations_to_optimum: int | None
    best_fitness: float
    iterations: int
    wall_time: float


@dataclass
class ExperimentConfig:
    """Everything needed to repeat an experiment: benchmark, algorithm, seeds."""

    benchmark: LoopBenchmark | TableBenchmark
    algorithm: str = "ga"  # "ga" | "nn-ga"
    ga_params: GaParams = field(default_factory=GaParams)
    nn_params: NnGaParams = field(default_factory=NnGaParams)
    runs: int = 30
    master_seed: int = 0
    sim_seed: int = 0
    max_iterations: int = 1000
    max_evaluations: int | None = None
    stagnation_window: int | None = None
    stop_at_optimum: bool = True
    oracle_path: str | None = None
    evaluation: str | None = None  # "replay" | "simulate"; default replay iff oracle
    output_dir: str = "out"
    workers: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.algorithm not in ("ga", "nn-ga"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.evaluation is None:
            self.evaluation = "replay" if self.oracle_path else "simulate"
        if self.evaluation not in ("replay", "simulate"):
            raise ValueError(f"unknown evaluation mode {self.evaluation!r}")
        if self.evaluation == "replay" and not self.oracle_path:
            raise ValueError("replay evaluation requires an oracle")
        if self.stop_at_optimum and not self.oracle_path:
            raise ValueError("stop_at_optimum requires an oracle")

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        b = doc["benchmark"]
        if b["type"] == "loop":
            loop_kwargs = {
                k: b[k]
                for k in ("interarrival", "processing_time", "transport_time",
                          "buffer_capacity", "horizon", "replications")
                if k in b
            }
            benchmark = LoopBenchmark(machines=b["machines"], params=LoopParams(**loop_kwargs))
        elif b["type"] == "table":
            benchmark = TableBenchmark(
                space_path=b["design_space"],
                fitness_path=b["fitness_table"],
                sense=Sense.MAXIMIZE if b.get("sense") == "max" else Sense.MINIMIZE,
            )
        else:
            raise ValueError(f"unknown benchmark type {b['type']!r}")
        term = doc.get("termination", {})
        params = doc.get("params", {})
        cfg = cls(
            benchmark=benchmark,
            algorithm=doc.get("algorithm", "ga"),
            runs=doc.get("runs", 30),
            master_seed=doc.get("master_seed", 0),
            sim_seed=b.get("sim_seed", 0),
            max_iterations=term.get("max_iterations", 1000),
            max_evaluations=term.get("max_evaluations"),
            stagnation_window=term.get("stagnation_window"),
            stop_at_optimum=term.get("stop_at_optimum", True),
            oracle_path=doc.get("oracle"),
            evaluation=doc.get("evaluation"),
            output_dir=doc.get("output_dir", "out"),
            workers=doc.get("workers", 1),
        )
        if params:
            if cfg.algorithm == "ga":
                cfg.ga_params = replace(GaParams(), **params)
            else:
                cfg.nn_params = replace(NnGaParams(), **params)
        return cfg


@dataclass
class ExperimentResult:
    summaries: list[RunSummary]
    aggregate: dict


_RUN_STATE: dict = {}


def _init_run_worker(config: ExperimentConfig, table, tie_ids) -> None:
    _RUN_STATE["config"] = config
    _RUN_STATE["table"] = table
    _RUN_STATE["ties"] = tie_ids
    _RUN_STATE["space"] = config.benchmark.space()


def _make_evaluator(config: ExperimentConfig, table) -> Evaluator:
    if config.evaluation == "replay":
        return TableEvaluator(table, config.benchmark.sense)
    if isinstance(config.benchmark, LoopBenchmark):
        from .loop_layout import LoopSimEvaluator

        return LoopSimEvaluator(
            config.benchmark.machines, config.benchmark.params, config.sim_seed
        )
    return TableEvaluator(config.benchmark.table(), config.benchmark.sense)


def _run_one(run_index: int) -> RunSummary:
    config: ExperimentConfig = _RUN_STATE["config"]
    space = _RUN_STATE["space"]
    ties = _RUN_STATE["ties"]
    evaluator = _make_evaluator(config, _RUN_STATE["table"])
    termination = Termination(
        max_iterations=config.max_iterations,
        max_evaluations=config.max_evaluations,
        stagnation_window=config.stagnation_window,
        target_design_ids=frozenset(ties) if (ties and config.stop_at_optimum) else None,
    )
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / f"run_{run_index}.jsonl"
    seed = (config.master_seed, run_index)
    t0 = time.perf_counter()
    with RunLog(log_path) as log:
        if config.algorithm == "ga":
            result = run_ga(space, evaluator, config.ga_params, termination, seed, log)
        else:
            result = run_nn_ga(space, evaluator, config.nn_params, termination, seed, log)
    wall = time.perf_counter() - t0

    evals_to_opt = None
    if ties:
        tie_set = set(ties)
        for k, rec in enumerate(result.archive):
            if rec.design_id in tie_set:
                evals_to_opt = k + 1
                break
    best = (min if evaluator.sense is Sense.MINIMIZE else max)(
        rec.fitness for rec in result.archive
    )
    return RunSummary(
        run_index=run_index,
        found_optimum=evals_to_opt is not None,
        evaluations_to_optimum=evals_to_opt,
        best_fitness=best,
        iterations=result.iterations,
        wall_time=wall,
    )


def run_experiment(config: ExperimentConfig, oracle: OracleResult | None = None) -> ExperimentResult:
    """Run the configured algorithm ``config.runs`` times and aggregate.

    Per-run seeds are (master_seed, run_index).  Aggregates over
    evaluations-to-optimum use only the successful runs.  Run logs land in
    ``output_dir/run_<k>.jsonl``; per-run rows in ``summary.csv``; the
    aggregate and a config echo in ``experiment.json``.
    """
    if oracle is None and config.oracle_path:
        oracle = load_oracle(config.oracle_path, config.benchmark.sense)
    if oracle is None and (config.stop_at_optimum or config.evaluation == "replay"):
        raise ValueError("this experiment requires an oracle, none was given")

    table = oracle.fitness if oracle is not None else None
    ties = oracle.tie_ids if oracle is not None else ()

    indices = list(range(config.runs))
    if config.workers > 1 and config.runs > 1:
        with ProcessPoolExecutor(
            max_workers=config.workers,
            initializer=_init_run_worker,
            initargs=(config, table, ties),
        ) as pool:
            summaries = list(pool.map(_run_one, indices))
    else:
        _init_run_worker(config, table, ties)
        summaries = [_run_one(k) for k in indices]
    summaries.sort(key=lambda s: s.run_index)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.csv", "w", newline="\n") as fh:
        fh.write(
            "run_index,found_optimum,evaluations_to_optimum,best_fitness,"
            "iterations,wall_time_s\n"
        )
        for s in summaries:
            evals = "" if s.evaluations_to_optimum is None else s.evaluations_to_optimum
            fh.write(
                f"{s.run_index},{s.found_optimum},{evals},{s.best_fitness!r},"
                f"{s.iterations},{s.wall_time:.3f}\n"
            )

    aggregate = _aggregate(config, summaries)
    echo = {
        "benchmark": _benchmark_echo(config.benchmark),
        "algorithm": config.algorithm,
        "runs": config.runs,
        "master_seed": config.master_seed,
        "sim_seed": config.sim_seed,
        "oracle": config.oracle_path,
        "evaluation": config.evaluation,
        "aggregate": aggregate,
    }
    with open(out_dir / "experiment.json", "w", newline="\n") as fh:
        json.dump(echo, fh, indent=2)
        fh.write("\n")
    return ExperimentResult(summaries=summaries, aggregate=aggregate)


def _benchmark_echo(benchmark) -> dict:
    if isinstance(benchmark, LoopBenchmark):
        return {
            "type": "loop",
            "machines": benchmark.machines,
            "n_designs": benchmark.n_designs(),
        }
    return {
        "type": "table",
        "design_space": benchmark.space_path,
        "fitness_table": benchmark.fitness_path,
        "sense": benchmark.sense.value,
    }


def _aggregate(config: ExperimentConfig, summaries: list[RunSummary]) -> dict:
    evals = [s.evaluations_to_optimum for s in summaries if s.found_optimum]
    n_designs = None
    if isinstance(config.benchmark, LoopBenchmark):
        n_designs = config.benchmark.n_designs()
    agg = {
        "runs": len(summaries),
        "successes": len(evals),
        "success_fraction": len(evals) / len(summaries),
        "mean_evaluations_to_optimum": float(np.mean(evals)) if evals else None,
        "std_evaluations_to_optimum": (
            float(np.std(evals, ddof=1)) if len(evals) > 1 else None
        ),
    }
    if n_designs and evals:
        agg["mean_fraction_of_space"] = float(np.mean(evals)) / n_designs
    return agg


# -- reporting -----------------------------------------------------------------


def _read_run_log(path: Path):
    evals = []
    summary = None
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            if "design_id" in rec:
                evals.append(rec)
            elif "found_optimum" in rec:
                summary = rec
    return evals, summary


def report(experiment_dirs, scalability_out: str | Path | None = None) -> dict:
    """Regenerate figure data from raw logs.

    Writes ``progress.csv`` (per evaluation count: mean/min/max of the
    best-rank-so-far percentile across runs, requires the experiment's
    oracle) into each experiment directory, and a combined
    ``scalability.csv`` when an output path is given.  Aggregates are
    recomputed from the raw JSONL logs and verified against the stored ones.
    """
    rows = []
    for d in experiment_dirs:
        d = Path(d)
        meta = json.loads((d / "experiment.json").read_text())
        oracle = None
        if meta.get("oracle"):
            sense = (
                Sense.MAXIMIZE
                if meta["benchmark"].get("sense") == Sense.MAXIMIZE.value
                else Sense.MINIMIZE
            )
            oracle = load_oracle(meta["oracle"], sense)
        run_logs = sorted(
            d.glob("run_*.jsonl"), key=lambda p: int(p.stem.split("_")[1])
        )
        tie_set = set(oracle.tie_ids) if oracle is not None else None
        evals_to_opt = []
        successes = 0
        per_run_evals = []
        for p in run_logs:
            evals, summary = _read_run_log(p)
            per_run_evals.append(evals)
            if tie_set is not None:
                hit = next(
                    (k + 1 for k, rec in enumerate(evals) if rec["design_id"] in tie_set),
                    None,
                )
                # the driver's own summary must agree whenever it knew the target
                if summary and summary.get("found_optimum") is not None:
                    if (summary["evaluations_to_optimum"] != hit
                            or summary["found_optimum"] != (hit is not None)):
                        raise AssertionError(
                            f"{p}: summary record disagrees with evaluation records"
                        )
                if hit is not None:
                    successes += 1
                    evals_to_opt.append(hit)
            elif summary and summary.get("found_optimum"):
                successes += 1
                evals_to_opt.append(summary["evaluations_to_optimum"])
        recomputed = {
            "runs": len(run_logs),
            "successes": successes,
            "success_fraction": successes / len(run_logs) if run_logs else 0.0,
            "mean_evaluations_to_optimum": (
                float(np.mean(evals_to_opt)) if evals_to_opt else None
            ),
            "std_evaluations_to_optimum": (
                float(np.std(evals_to_opt, ddof=1)) if len(evals_to_opt) > 1 else None
            ),
        }
        stored = meta["aggregate"]
        for key, value in recomputed.items():
            if stored.get(key) != value:
                raise AssertionError(
                    f"{d}: aggregate {key} mismatch: stored {stored.get(key)!r} "
                    f"vs recomputed {value!r}"
                )
        if oracle is not None:
            _write_progress_csv(d / "progress.csv", per_run_evals, oracle)
        row = {
            "dir": str(d),
            "benchmark": meta["benchmark"].get("machines", meta["benchmark"].get("type")),
            "n_designs": meta["benchmark"].get("n_designs"),
            "algorithm": meta["algorithm"],
            **recomputed,
        }
        if row["n_designs"] and recomputed["mean_evaluations_to_optimum"]:
            row["mean_fraction_of_space"] = (
                recomputed["mean_evaluations_to_optimum"] / row["n_designs"]
            )
        rows.append(row)

    if scalability_out is not None:
        cols = [
            "dir", "benchmark", "n_designs", "algorithm", "runs", "successes",
            "success_fraction", "mean_evaluations_to_optimum",
            "std_evaluations_to_optimum", "mean_fraction_of_space",
        ]
        with open(scalability_out, "w", newline="\n") as fh:
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(",".join("" if row.get(c) is None else str(row.get(c)) for c in cols) + "\n")
    return {"experiments": rows}


def _write_progress_csv(path: Path, per_run_evals, oracle: OracleResult) -> None:
    n = len(oracle.fitness)
    curves = []
    for evals in per_run_evals:
        best = []
        cur = n + 1
        for rec in evals:
            cur = min(cur, int(oracle.ranks[rec["design_id"]]))
            best.append(cur)
        curves.append(best)
    longest = max(len(c) for c in curves)
    grid = np.full((len(curves), longest), np.nan)
    for i, c in enumerate(curves):
        grid[i, : len(c)] = c
        grid[i, len(c):] = c[-1]
    pct = grid / n * 100.0
    with open(path, "w", newline="\n") as fh:
        fh.write("evaluations,mean_best_rank_pct,min_best_rank_pct,max_best_rank_pct\n")
        for k in range(longest):
            fh.write(
                f"{k + 1},{float(pct[:, k].mean())!r},{float(pct[:, k].min())!r},{float(pct[:, k].max())!r}\n"
            )
