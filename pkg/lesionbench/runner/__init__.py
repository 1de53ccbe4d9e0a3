"""
Experiment orchestration: config-driven training, evaluation, prediction,
inference benchmarking and report writing.
"""

from lesionbench.runner.checkpoint import LoadedModel, load_checkpoint, save_checkpoint
from lesionbench.runner.comparison import LossRun, run_loss_comparison
from lesionbench.runner.evaluation import BenchResult, bench_inference, evaluate, evaluate_cases
from lesionbench.runner.experiment import ExperimentConfig, load_experiment, parse_experiment
from lesionbench.runner.predictor import predict_case, predict_probabilities, probabilities_to_labels
from lesionbench.runner.trainer import TrainingResult, train

__all__ = [
    "BenchResult",
    "ExperimentConfig",
    "LoadedModel",
    "LossRun",
    "TrainingResult",
    "bench_inference",
    "evaluate",
    "evaluate_cases",
    "load_checkpoint",
    "load_experiment",
    "parse_experiment",
    "predict_case",
    "predict_probabilities",
    "probabilities_to_labels",
    "run_loss_comparison",
    "save_checkpoint",
    "train",
]
