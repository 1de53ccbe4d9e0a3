"""
Loss comparison: identically seeded runs that differ only in the loss kind.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from lesionbench.data_model import CaseRecord, Diagnosis, Split, load_cases, load_manifest
from lesionbench.errors import TrainingError
from lesionbench.losses import LossKind
from lesionbench.metrics import EvalReport
from lesionbench.runner.checkpoint import load_checkpoint
from lesionbench.runner.evaluation import evaluate_cases
from lesionbench.runner.experiment import ExperimentConfig
from lesionbench.runner.trainer import TrainingResult, train
from lesionbench.utils.config import config
from lesionbench.utils.logger import logger

DEFAULT_COMPARED_KINDS = (LossKind.WEIGHTED_CE.value, LossKind.CE_MINUS_LOG_DICE.value)


@dataclass
class LossRun:
    kind: str
    training: TrainingResult
    report: EvalReport

    @property
    def test_dice(self) -> float:
        return self.report.overall(self.report.regions[0]).dice


def run_loss_comparison(experiment: ExperimentConfig, kinds: Sequence[str] = DEFAULT_COMPARED_KINDS,
                        cases: Optional[Sequence[CaseRecord]] = None) -> Dict[str, LossRun]:
    """Train one run per loss kind and score each best checkpoint on the test split.

    Every run shares the experiment's seed, data, model and sampler; run
    directories are suffixed with the loss kind.

    Raises:
        TrainingError: no test cases to score against
    """
    if cases is None:
        manifest = load_manifest(experiment.manifest)
        cases = load_cases(manifest, workers=max(config.NUM_WORKERS, 1), num_classes=experiment.num_classes)
    test_cases = [c for c in cases if c.split == Split.TEST and c.diagnosis != Diagnosis.TN]
    if not test_cases:
        raise TrainingError(f"Experiment {experiment.name}: no test cases for the loss comparison")

    runs: Dict[str, LossRun] = {}
    for kind in kinds:
        key = LossKind.parse(kind).value
        variant = experiment.model_copy(update={
            "name": f"{experiment.name}_{key}",
            "loss": experiment.loss.model_copy(update={"kind": key}),
        })
        training = train(variant, cases)
        loaded = load_checkpoint(training.checkpoint_path)
        runs[key] = LossRun(key, training, evaluate_cases(loaded, test_cases))
        logger.info(f"Loss comparison {experiment.name}: {key} held-out dice {runs[key].test_dice:.4f}")
    return runs


def dice_by_kind(runs: Dict[str, LossRun]) -> Dict[str, float]:
    return {kind: run.test_dice for kind, run in runs.items()}


def loss_curves(runs: Dict[str, LossRun]) -> Dict[str, List[float]]:
    return {kind: run.training.loss_curve for kind, run in runs.items()}
