"""Command-line interface: oracles, experiments, and report generation."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .harness import (
    ExperimentConfig,
    LoopBenchmark,
    exhaustive,
    load_oracle,
    report,
    run_experiment,
)
from .loop_layout import LoopParams, fitness as loop_fitness


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topogen",
        description="Simulation-based topology optimization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    oracle = sub.add_parser("oracle", help="exhaustively simulate a benchmark")
    oracle_sub = oracle.add_subparsers(dest="benchmark", required=True)
    oloop = oracle_sub.add_parser("loop", help="n-machine loop layout")
    oloop.add_argument("--machines", type=int, required=True)
    oloop.add_argument("--seed", type=int, default=0)
    oloop.add_argument("--out", type=Path, default=None,
                       help="output CSV (default oracle_<machines>.csv)")
    oloop.add_argument("--workers", type=int, default=1)

    bench = sub.add_parser("bench", help="run a benchmark once or exhaustively")
    bench_sub = bench.add_subparsers(dest="benchmark", required=True)
    bloop = bench_sub.add_parser("loop")
    bloop.add_argument("--machines", type=int, required=True)
    bloop.add_argument("--seed", type=int, default=0)
    bloop.add_argument("--exhaustive", action="store_true",
                       help="simulate all n! designs and write the oracle CSV")
    bloop.add_argument("--order", type=str, default=None,
                       help="comma-separated station order (default 1,2,...,n)")
    bloop.add_argument("--out", type=Path, default=None)
    bloop.add_argument("--workers", type=int, default=1)

    run = sub.add_parser("run", help="run a configured experiment")
    run.add_argument("--config", type=Path, required=True)

    rep = sub.add_parser("report", help="regenerate figure data from experiment logs")
    rep.add_argument("--dir", type=Path, nargs="+", required=True)
    rep.add_argument("--out", type=Path, default=None,
                     help="combined scalability CSV path")
    return parser


def _cmd_oracle_loop(args) -> dict:
    out = args.out or Path(f"oracle_{args.machines}.csv")
    t0 = time.perf_counter()
    oracle = exhaustive(
        LoopBenchmark(machines=args.machines),
        seed=args.seed,
        workers=args.workers,
        out_path=out,
    )
    return {
        "designs": len(oracle.fitness),
        "best_design_id": oracle.best_id,
        "best_fitness": oracle.fitness[oracle.best_id],
        "ties_at_best": len(oracle.tie_ids),
        "out": str(out),
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }


def _cmd_bench_loop(args) -> dict:
    if args.exhaustive:
        return _cmd_oracle_loop(args)
    if args.order:
        order = tuple(int(x) for x in args.order.split(","))
    else:
        order = tuple(range(1, args.machines + 1))
    value = loop_fitness(order, LoopParams(), seed=args.seed)
    return {"order": list(order), "mean_cycle_time": value, "seed": args.seed}


def _cmd_run(args) -> dict:
    config = ExperimentConfig.from_json(args.config)
    oracle = None
    if config.oracle_path:
        oracle = load_oracle(config.oracle_path, config.benchmark.sense)
    result = run_experiment(config, oracle)
    return {"output_dir": config.output_dir, "aggregate": result.aggregate}


def _cmd_report(args) -> dict:
    return report([str(d) for d in args.dir], args.out)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "oracle":
            out = _cmd_oracle_loop(args)
        elif args.command == "bench":
            out = _cmd_bench_loop(args)
        elif args.command == "run":
            out = _cmd_run(args)
        else:
            out = _cmd_report(args)
    except Exception as e:  # machine-readable failure contract
        print(json.dumps({"error": type(e).__name__, "message": str(e)}),
              file=sys.stderr)
        return 1
    print(json.dumps(out, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
