"""Simulation-based topology optimization of production systems.

Modules by concern: design spaces and chromosome encoding
(:mod:`topology`), selection and variation operators (:mod:`genetic_ops`),
the GA drivers (:mod:`ga_core`, :mod:`nn_ga`), the discrete-event kernel
and the loop-layout benchmark (:mod:`des_kernel`, :mod:`loop_layout`),
neural surrogates (:mod:`surrogate`), and the experiment harness plus CLI
(:mod:`harness`, :mod:`cli`).
"""
from .ga_core import EvaluationRecord, Evaluator, GaParams, GaResult, Termination, run_ga
from .genetic_ops import RankSelectConfig, Sense, VariationConfig
from .harness import ExperimentConfig, LoopBenchmark, TableBenchmark, exhaustive, run_experiment
from .loop_layout import LoopParams
from .nn_ga import NnGaParams, NnGaResult, run_nn_ga
from .surrogate import Hyperparams, Mlp, TrainConfig
from .topology import Chromosome, Design, DesignSpace, decode, encode, hamming, load_design_space

__version__ = "0.1.0"

__all__ = [
    "Chromosome",
    "Design",
    "DesignSpace",
    "EvaluationRecord",
    "Evaluator",
    "ExperimentConfig",
    "GaParams",
    "GaResult",
    "Hyperparams",
    "LoopBenchmark",
    "LoopParams",
    "Mlp",
    "NnGaParams",
    "NnGaResult",
    "RankSelectConfig",
    "Sense",
    "TableBenchmark",
    "Termination",
    "TrainConfig",
    "VariationConfig",
    "decode",
    "encode",
    "exhaustive",
    "hamming",
    "load_design_space",
    "run_experiment",
    "run_ga",
    "run_nn_ga",
]
