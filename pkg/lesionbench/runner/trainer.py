"""
Config-driven training.

One call to train() runs a complete, seeded experiment:

1. load the train split and carve a validation subset out of it
2. count class ratios over the remaining training labels (dataset-scope losses)
3. per epoch, draw batches through a DataLoader whose items carry their own
   derived seeds, so results do not depend on the number of workers
4. validate by whole-case prediction, log the epoch and keep the checkpoint
   with the best validation hard dice

Augmentation is applied to two_dim slices only.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from torch.utils.data import DataLoader, Dataset

from lesionbench.augment import AugmentConfig, augment_slice
from lesionbench.data_model import CaseRecord, Split, load_cases, load_manifest
from lesionbench.errors import OutOfMemoryGuidanceError, TrainingError
from lesionbench.losses import LossConfig, LossKind, RatioScope, compute_class_ratios, compute_loss
from lesionbench.metrics import evaluate_case
from lesionbench.models import SegmentationNetwork, build_model, count_parameters, model_label
from lesionbench.runner.checkpoint import save_checkpoint
from lesionbench.runner.experiment import ExperimentConfig
from lesionbench.runner.predictor import predict_probabilities, probabilities_to_labels
from lesionbench.sampling import PatchSpec, samplers
from lesionbench.utils.config import config
from lesionbench.utils.logger import bind_run_id, logger
from lesionbench.utils.seeding import derive_seed, seed_everything

CHECKPOINT_NAME = "best.pt"
TRAINING_LOG_NAME = "training_log.csv"
COLLAPSE_WARNING_FRACTION = 0.5


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_dice: float
    val_precision: Optional[float]
    val_sensitivity: Optional[float]
    collapse_fraction: float
    seconds: float


@dataclass
class TrainingResult:
    checkpoint_path: Path
    log_path: Path
    history: List[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_val_dice: float = 0.0
    num_parameters: int = 0

    @property
    def loss_curve(self) -> List[float]:
        return [row.train_loss for row in self.history]


class _EpochSeededDataset(Dataset):
    """Base for datasets whose items are reseeded every epoch."""

    def __init__(self, cases: Sequence[CaseRecord], seed: int):
        self.cases = list(cases)
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch


class SliceDataset(_EpochSeededDataset):
    """Every axial slice of every case, augmented with a per-slice seed."""

    def __init__(self, cases: Sequence[CaseRecord], seed: int, augment: AugmentConfig):
        super().__init__(cases, seed)
        self.augment = augment
        self.items = [(i, k) for i, case in enumerate(self.cases) for k in range(case.spatial_shape[0])]

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        case_index, k = self.items[index]
        case = self.cases[case_index]
        seed = derive_seed(self.seed, case.case_id, k, self.epoch)
        image, label = augment_slice(case.image.data[:, k], case.label.data[k], self.augment, seed)
        return np.ascontiguousarray(image, dtype=np.float32), label.astype(np.int64)


class VolumeDataset(_EpochSeededDataset):
    """Whole volumes, one item per case."""

    def __len__(self) -> int:
        return len(self.cases)

    def __getitem__(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        case = self.cases[index]
        return case.image.data.astype(np.float32), case.label.data.astype(np.int64)


class PatchDataset(_EpochSeededDataset):
    """patches_per_case patches per case, drawn by a patch sampler."""

    def __init__(self, cases: Sequence[CaseRecord], seed: int, sampler_key: str, spec: PatchSpec,
                 patches_per_case: int):
        super().__init__(cases, seed)
        self.sample = samplers.function(sampler_key)
        self.spec = spec
        self.items = [(i, k) for i in range(len(self.cases)) for k in range(patches_per_case)]

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        case_index, k = self.items[index]
        case = self.cases[case_index]
        batch = self.sample(case, self.spec, 1, derive_seed(self.seed, case.case_id, k, self.epoch))
        return batch.patches[0].astype(np.float32), batch.labels[0].astype(np.int64)


def build_dataset(experiment: ExperimentConfig, cases: Sequence[CaseRecord]) -> _EpochSeededDataset:
    info = samplers.info(experiment.sampler.key)
    if info.key == "two_dim":
        return SliceDataset(cases, experiment.seed, experiment.augment.to_augment_config())
    if info.patched:
        return PatchDataset(cases, experiment.seed, info.key, experiment.sampler.to_patch_spec(),
                            experiment.sampler.patches_per_case)
    return VolumeDataset(cases, experiment.seed)


def split_validation(cases: Sequence[CaseRecord], fraction: float, seed: int) -> Tuple[List[CaseRecord], List[CaseRecord]]:
    """Seeded (fit, validation) partition of the training cases.

    With a single training case, or fraction 0, the fit cases double as the
    validation set.
    """
    cases = list(cases)
    n = len(cases)
    num_val = int(round(fraction * n))
    if fraction > 0 and n >= 2:
        num_val = min(max(num_val, 1), n - 1)
    else:
        num_val = 0
    if num_val == 0:
        logger.info("No validation split carved out; validating on the training cases")
        return cases, cases
    order = np.random.default_rng(derive_seed(seed, "validation")).permutation(n)
    val_idx = set(order[:num_val].tolist())
    fit = [c for i, c in enumerate(cases) if i not in val_idx]
    val = [c for i, c in enumerate(cases) if i in val_idx]
    return fit, val


def resolve_loss_config(experiment: ExperimentConfig, fit_cases: Sequence[CaseRecord], num_classes: int) -> LossConfig:
    loss_config = experiment.loss.to_loss_config()
    needs_ratios = loss_config.kind in (LossKind.WEIGHTED_CE, LossKind.CE_MINUS_LOG_DICE)
    if needs_ratios and loss_config.ratio_scope == RatioScope.DATASET:
        ratios = compute_class_ratios([c.label for c in fit_cases], num_classes)
        logger.info(f"Dataset class ratios: {np.array2string(ratios, precision=6)}")
        loss_config = loss_config.with_ratios(ratios)
    return loss_config


def _make_optimizer(experiment: ExperimentConfig, model: SegmentationNetwork) -> torch.optim.Optimizer:
    opt = experiment.optimizer
    if opt.name == "sgd":
        return torch.optim.SGD(model.parameters(), lr=opt.learning_rate, momentum=0.9, weight_decay=opt.weight_decay)
    return torch.optim.Adam(model.parameters(), lr=opt.learning_rate, weight_decay=opt.weight_decay)


def _mean_defined(values) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def validate(model: SegmentationNetwork, cases: Sequence[CaseRecord], experiment: ExperimentConfig,
             num_classes: int) -> Tuple[float, Optional[float], Optional[float], float]:
    """Mean validation (dice, precision, sensitivity) and the fraction of all-background predictions."""
    rows, collapsed = [], 0
    for case in cases:
        probs = predict_probabilities(model, case, experiment.sampler.key, experiment.sampler.to_patch_spec(),
                                      batch_size=experiment.batch_size)
        prediction = probabilities_to_labels(probs, num_classes)
        if not prediction.foreground.any():
            collapsed += 1
        rows.extend(evaluate_case(case.case_id, case.diagnosis, prediction, case.label, num_classes))
    dice = _mean_defined(r.dice for r in rows) or 0.0
    return (dice, _mean_defined(r.precision for r in rows), _mean_defined(r.sensitivity for r in rows),
            collapsed / max(len(cases), 1))


def _train_epoch(model, loader, optimizer, loss_config, device) -> float:
    model.train()
    total, count = 0.0, 0
    for images, labels in loader:
        images, labels = images.to(device), labels.to(device)
        try:
            optimizer.zero_grad(set_to_none=True)
            probs = model(images)
            loss = compute_loss(probs, labels, loss_config)
            loss.backward()
            optimizer.step()
        except RuntimeError as e:
            if isinstance(e, torch.cuda.OutOfMemoryError) or "out of memory" in str(e).lower():
                raise OutOfMemoryGuidanceError(
                    f"Ran out of memory on batches of shape {tuple(images.shape)}; "
                    "reduce batch_size (or the patch size) in the experiment config"
                ) from e
            raise
        if not torch.isfinite(loss):
            raise TrainingError(f"Training loss became {loss.item()}; lower the learning rate")
        total += loss.item() * len(images)
        count += len(images)
    return total / max(count, 1)


def _write_log(history: List[EpochLog], path: Path) -> None:
    pd.DataFrame([asdict(row) for row in history]).to_csv(path, index=False)


def train(experiment: ExperimentConfig, cases: Optional[Sequence[CaseRecord]] = None,
          device: Optional[str] = None) -> TrainingResult:
    """Train a model as configured.

    Args:
        experiment: Validated experiment configuration
        cases: Training cases; loaded from the experiment manifest's train split when omitted
        device: torch device; defaults to config.DEVICE

    Returns:
        TrainingResult with the best checkpoint and the per-epoch log

    Raises:
        TrainingError: empty train split, non-finite loss
        OutOfMemoryGuidanceError: the device ran out of memory
    """
    with bind_run_id(f"{experiment.name}-{experiment.seed}"):
        return _train(experiment, cases, device or config.DEVICE)


def _train(experiment: ExperimentConfig, cases: Optional[Sequence[CaseRecord]], device: str) -> TrainingResult:
    if cases is None:
        manifest = load_manifest(experiment.manifest)
        cases = load_cases(manifest, Split.TRAIN, workers=max(config.NUM_WORKERS, 1),
                           num_classes=experiment.num_classes)
    cases = [c for c in cases if c.split == Split.TRAIN]
    if not cases:
        raise TrainingError(f"Experiment {experiment.name}: the train split is empty")

    seed_everything(experiment.seed, config.DETERMINISTIC)
    num_classes = experiment.num_classes or cases[0].num_classes
    in_channels = cases[0].image.num_sequences
    fit_cases, val_cases = split_validation(cases, experiment.validation_fraction, experiment.seed)
    loss_config = resolve_loss_config(experiment, fit_cases, num_classes)

    model_config = experiment.model.to_model_config(in_channels, num_classes)
    model = build_model(model_config, seed=derive_seed(experiment.seed, "init")).to(device)
    optimizer = _make_optimizer(experiment, model)
    dataset = build_dataset(experiment, fit_cases)
    num_parameters = count_parameters(model)
    logger.info(
        f"Training {model_label(model_config)} ({num_parameters} parameters) with "
        f"{experiment.sampler.key} / {experiment.loss.kind}: {len(fit_cases)} fit cases, "
        f"{len(val_cases)} validation cases, {len(dataset)} items per epoch"
    )

    run_dir = experiment.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = run_dir / CHECKPOINT_NAME
    log_path = run_dir / TRAINING_LOG_NAME
    result = TrainingResult(checkpoint_path, log_path, num_parameters=num_parameters, best_val_dice=-math.inf)

    for epoch in range(1, experiment.epochs + 1):
        started = time.perf_counter()
        dataset.set_epoch(epoch)
        generator = torch.Generator().manual_seed(derive_seed(experiment.seed, "shuffle", epoch))
        loader = DataLoader(dataset, batch_size=experiment.batch_size, shuffle=True, generator=generator,
                            num_workers=config.NUM_WORKERS)
        train_loss = _train_epoch(model, loader, optimizer, loss_config, device)
        val_dice, val_precision, val_sensitivity, collapse = validate(model, val_cases, experiment, num_classes)

        row = EpochLog(epoch, train_loss, val_dice, val_precision, val_sensitivity, collapse,
                       time.perf_counter() - started)
        result.history.append(row)
        _write_log(result.history, log_path)
        logger.info(f"Epoch {epoch}/{experiment.epochs}: loss {train_loss:.5f}, val dice {val_dice:.4f}, "
                    f"collapse {collapse:.2f}")
        if collapse > COLLAPSE_WARNING_FRACTION:
            logger.warning(f"Foreground collapse: {collapse:.0%} of validation predictions are all background "
                           f"(epoch {epoch}, loss {experiment.loss.kind})")

        if val_dice > result.best_val_dice:
            result.best_val_dice = val_dice
            result.best_epoch = epoch
            save_checkpoint(checkpoint_path, model, experiment, epoch, asdict(row))

    logger.info(f"Best validation dice {result.best_val_dice:.4f} at epoch {result.best_epoch}; "
                f"checkpoint {checkpoint_path}")
    return result
