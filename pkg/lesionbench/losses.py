"""
Differentiable training objectives for class-imbalanced segmentation.

All losses take class probabilities (already softmax-normalized) of shape
(N, num_classes, *spatial) and integer labels of shape (N, *spatial), and
reduce by the mean over voxels so their magnitude does not depend on the
input size.

- weighted_ce: -log p[true class] weighted by 1 / r_c, r_c the class ratio
- soft_dice: smoothed dice over probabilities, variants D1 (squared sums)
  and D2 (plain sums); multi-class dice averages classes 1..K-1
- ce_minus_log_dice: weighted_ce - log(soft_dice)
- cross_entropy: weighted_ce with every weight equal to 1
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from lesionbench.data_model import LabelVolume
from lesionbench.errors import LossInputError

PROB_CLAMP = 1e-7
RATIO_FLOOR = 1e-7
NORMALIZATION_TOLERANCE = 1e-4


class LossKind(str, Enum):
    CROSS_ENTROPY = "cross_entropy"
    WEIGHTED_CE = "weighted_ce"
    SOFT_DICE = "soft_dice"
    CE_MINUS_LOG_DICE = "ce_minus_log_dice"

    @classmethod
    def parse(cls, value: Union[str, "LossKind"]) -> "LossKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        key = LOSS_ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            allowed = ", ".join(k.value for k in cls)
            raise LossInputError(f"Unknown loss function '{value}' (allowed: {allowed})") from None


LOSS_ALIASES = {
    "crossentropy": "cross_entropy",
    "cross entropy": "cross_entropy",
    "weighted_cross_entropy": "weighted_ce",
}


class DiceVariant(str, Enum):
    D1 = "D1"
    D2 = "D2"


class RatioScope(str, Enum):
    DATASET = "dataset"
    VOLUME = "volume"


@dataclass(frozen=True)
class LossConfig:
    """Training objective settings.

    Attributes:
        kind: Which loss to compute
        dice_variant: D1 (squared denominators) or D2 (plain sums)
        smooth_eps: Smoothing added to the dice numerator and denominator
        ratio_scope: "dataset" uses class_ratios; "volume" recomputes ratios per batch
        class_ratios: Per-class ratios summing to 1 (dataset scope)
    """
    kind: LossKind = LossKind.CE_MINUS_LOG_DICE
    dice_variant: DiceVariant = DiceVariant.D2
    smooth_eps: float = 1e-5
    ratio_scope: RatioScope = RatioScope.DATASET
    class_ratios: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind.parse(self.kind))
        object.__setattr__(self, "dice_variant", DiceVariant(self.dice_variant))
        object.__setattr__(self, "ratio_scope", RatioScope(self.ratio_scope))
        if self.smooth_eps <= 0:
            raise LossInputError(f"smooth_eps must be > 0, got {self.smooth_eps}")
        if self.class_ratios is not None:
            ratios = tuple(float(r) for r in self.class_ratios)
            if min(ratios) <= 0:
                raise LossInputError(f"Class ratios must all be > 0, got {ratios}")
            if abs(sum(ratios) - 1.0) > 1e-6:
                raise LossInputError(f"Class ratios must sum to 1, got {sum(ratios)}")
            object.__setattr__(self, "class_ratios", ratios)

    def with_ratios(self, ratios: Sequence[float]) -> "LossConfig":
        return LossConfig(self.kind, self.dice_variant, self.smooth_eps, self.ratio_scope, tuple(ratios))

    @classmethod
    def from_labels(cls, labels, num_classes: int, **kwargs) -> "LossConfig":
        """Build a dataset-scope config with ratios counted over labels."""
        return cls(class_ratios=tuple(compute_class_ratios(labels, num_classes)), **kwargs)


def compute_class_ratios(labels: Union[LabelVolume, np.ndarray, Iterable], num_classes: int) -> np.ndarray:
    """Fraction of voxels per class over one label volume or a collection.

    Zero-count classes are floored at 1e-7 and the ratios renormalized.

    Raises:
        LossInputError: no voxels at all
    """
    if isinstance(labels, (LabelVolume, np.ndarray, torch.Tensor)):
        labels = [labels]
    counts = np.zeros(num_classes, dtype=np.float64)
    for item in labels:
        data = item.data if isinstance(item, LabelVolume) else item
        if isinstance(data, torch.Tensor):
            data = data.detach().cpu().numpy()
        data = np.asarray(data).ravel().astype(np.int64)
        if data.size and (data.min() < 0 or data.max() >= num_classes):
            raise LossInputError(f"Label values outside [0, {num_classes})")
        counts += np.bincount(data, minlength=num_classes)[:num_classes]
    total = counts.sum()
    if total == 0:
        raise LossInputError("Cannot compute class ratios over zero voxels")
    ratios = np.maximum(counts / total, RATIO_FLOOR)
    return ratios / ratios.sum()


def _check_inputs(probs: torch.Tensor, labels: torch.Tensor) -> None:
    if probs.dim() < 2:
        raise LossInputError(f"Probabilities must be (N, num_classes, ...), got {tuple(probs.shape)}")
    if tuple(labels.shape) != (probs.shape[0], *probs.shape[2:]):
        raise LossInputError(
            f"Label shape {tuple(labels.shape)} does not match probabilities {tuple(probs.shape)}"
        )
    with torch.no_grad():
        sums = probs.sum(dim=1)
        if (sums - 1).abs().max().item() > NORMALIZATION_TOLERANCE:
            raise LossInputError("Probabilities are not channel-normalized (per-voxel sums differ from 1)")


def _one_hot(labels: torch.Tensor, num_classes: int, dtype: torch.dtype) -> torch.Tensor:
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_classes):
        raise LossInputError(f"Label values outside [0, {num_classes})")
    one_hot = torch.nn.functional.one_hot(labels.long(), num_classes)
    return one_hot.movedim(-1, 1).to(dtype)


def weighted_cross_entropy(probs: torch.Tensor, labels: torch.Tensor,
                           ratios: Optional[Sequence[float]] = None) -> torch.Tensor:
    """Mean over voxels of -log(p_true) / r_true.

    Probabilities are clamped to [1e-7, 1] inside the log. ratios=None weights
    every class by 1 (plain cross-entropy).
    """
    _check_inputs(probs, labels)
    num_classes = probs.shape[1]
    labels = labels.long()
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_classes):
        raise LossInputError(f"Label values outside [0, {num_classes})")
    true_probs = probs.gather(1, labels.unsqueeze(1)).squeeze(1)
    nll = -torch.log(true_probs.clamp(PROB_CLAMP, 1.0))
    if ratios is not None:
        ratios = torch.as_tensor(ratios, dtype=probs.dtype, device=probs.device)
        if ratios.numel() != num_classes:
            raise LossInputError(f"{ratios.numel()} class ratios given for {num_classes} classes")
        if (ratios <= 0).any():
            raise LossInputError("Class ratios must be positive")
        nll = nll / ratios[labels]
    return nll.mean()


def soft_dice(probs: torch.Tensor, labels: torch.Tensor, variant: Union[str, DiceVariant] = DiceVariant.D2,
              smooth_eps: float = 1e-5) -> torch.Tensor:
    """Smoothed soft dice over the foreground classes.

    D = (2 sum(p g) + eps) / (denominator + eps), with denominator
    sum(p^2) + sum(g^2) for D1 and sum(p) + sum(g) for D2. With more than two
    classes the result is the mean of one-vs-rest dice over classes 1..K-1.
    """
    variant = DiceVariant(variant)
    if probs.dim() < 2:
        raise LossInputError(f"Probabilities must be (N, num_classes, ...), got {tuple(probs.shape)}")
    if tuple(labels.shape) != (probs.shape[0], *probs.shape[2:]):
        raise LossInputError(
            f"Label shape {tuple(labels.shape)} does not match probabilities {tuple(probs.shape)}"
        )
    num_classes = probs.shape[1]
    truth = _one_hot(labels, num_classes, probs.dtype)
    reduce_dims = [d for d in range(probs.dim()) if d != 1]

    p = probs[:, 1:]
    g = truth[:, 1:]
    intersection = (p * g).sum(dim=reduce_dims)
    if variant == DiceVariant.D1:
        denominator = (p * p).sum(dim=reduce_dims) + (g * g).sum(dim=reduce_dims)
    else:
        denominator = p.sum(dim=reduce_dims) + g.sum(dim=reduce_dims)
    dice = (2 * intersection + smooth_eps) / (denominator + smooth_eps)
    return dice.mean()


def _ratios_for(config: LossConfig, labels: torch.Tensor, num_classes: int):
    if config.kind == LossKind.CROSS_ENTROPY:
        return None
    if config.ratio_scope == RatioScope.VOLUME:
        return tuple(compute_class_ratios(labels, num_classes))
    if config.class_ratios is None:
        raise LossInputError("Dataset-scope weighted losses need class_ratios; compute them over the training split")
    return config.class_ratios


def ce_minus_log_dice(probs: torch.Tensor, labels: torch.Tensor, config: LossConfig) -> torch.Tensor:
    """Weighted cross-entropy minus the log of the soft dice."""
    wce = weighted_cross_entropy(probs, labels, _ratios_for(config, labels, probs.shape[1]))
    dice = soft_dice(probs, labels, config.dice_variant, config.smooth_eps)
    return wce - torch.log(dice)


def compute_loss(probs: torch.Tensor, labels: torch.Tensor, config: LossConfig) -> torch.Tensor:
    """Evaluate the configured objective."""
    kind = config.kind
    if kind == LossKind.CE_MINUS_LOG_DICE:
        return ce_minus_log_dice(probs, labels, config)
    if kind == LossKind.SOFT_DICE:
        _check_inputs(probs, labels)
        # minimizing 1 - D keeps the loss non-negative
        return 1.0 - soft_dice(probs, labels, config.dice_variant, config.smooth_eps)
    return weighted_cross_entropy(probs, labels, _ratios_for(config, labels, probs.shape[1]))
