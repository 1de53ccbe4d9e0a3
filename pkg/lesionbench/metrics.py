"""
Voxelwise evaluation: confusion counts, hard dice, precision and
sensitivity, BraTS region merging and per-diagnosis aggregation.

A metric whose denominator is zero is undefined and reported as None; it is
left out of every mean. The one exception is dice of an empty prediction
against an empty truth, which is 1.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from lesionbench.data_model import BRATS_NUM_CLASSES, Diagnosis, LabelVolume
from lesionbench.errors import MetricInputError

METRIC_NAMES = ("dice", "precision", "sensitivity")

# Supplementary-table row order; other tags present in a report follow these.
REPORT_DIAGNOSES = (
    Diagnosis.METASTASIS,
    Diagnosis.MENINGIOMA,
    Diagnosis.SCHWANNOMA,
    Diagnosis.PITUITARY,
    Diagnosis.AVM,
    Diagnosis.OTHER,
)
TOTAL_ROW = "Total"


class Region(str, Enum):
    LESION = "lesion"
    WHOLE = "whole"
    CORE = "core"
    ENHANCING = "enhancing"


BRATS_REGIONS: Dict[Region, tuple] = {
    Region.WHOLE: (1, 2, 3, 4),
    Region.CORE: (1, 3, 4),
    Region.ENHANCING: (4,),
}


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise MetricInputError(f"Confusion counts must be non-negative, got {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


def _as_mask(mask, name: str) -> np.ndarray:
    if isinstance(mask, LabelVolume):
        return mask.foreground
    return np.asarray(mask).astype(bool)


def confusion(pred_mask, true_mask) -> ConfusionCounts:
    """Exact voxel counts of a binary prediction against a binary truth.

    Raises:
        MetricInputError: the masks are not aligned
    """
    pred = _as_mask(pred_mask, "prediction")
    truth = _as_mask(true_mask, "truth")
    if pred.shape != truth.shape:
        raise MetricInputError(f"Prediction shape {pred.shape} differs from truth shape {truth.shape}")
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    return ConfusionCounts(tp, fp, fn, pred.size - tp - fp - fn)


def hard_dice(counts: ConfusionCounts) -> Optional[float]:
    denominator = 2 * counts.tp + counts.fp + counts.fn
    if denominator == 0:
        return 1.0
    return 2 * counts.tp / denominator


def precision(counts: ConfusionCounts) -> Optional[float]:
    denominator = counts.tp + counts.fp
    return counts.tp / denominator if denominator else None


def sensitivity(counts: ConfusionCounts) -> Optional[float]:
    denominator = counts.tp + counts.fn
    return counts.tp / denominator if denominator else None


def merge_brats_classes(label: Union[LabelVolume, np.ndarray]) -> Dict[Region, np.ndarray]:
    """Binary whole / core / enhancing masks of a five-class BraTS label.

    Raises:
        MetricInputError: a label value outside 0..4
    """
    data = label.data if isinstance(label, LabelVolume) else np.asarray(label)
    if data.size and (data.min() < 0 or data.max() >= BRATS_NUM_CLASSES):
        raise MetricInputError(f"BraTS labels must lie in 0..{BRATS_NUM_CLASSES - 1}, "
                               f"got range [{data.min()}, {data.max()}]")
    return {region: np.isin(data, classes) for region, classes in BRATS_REGIONS.items()}


@dataclass(frozen=True)
class CaseMetrics:
    """Metrics of one case over one region."""
    case_id: str
    diagnosis: Diagnosis
    region: Region
    dice: Optional[float]
    precision: Optional[float]
    sensitivity: Optional[float]
    counts: ConfusionCounts = field(default_factory=ConfusionCounts)

    @classmethod
    def from_counts(cls, case_id: str, diagnosis, counts: ConfusionCounts,
                    region: Region = Region.LESION) -> "CaseMetrics":
        return cls(case_id, Diagnosis.parse(diagnosis), Region(region),
                   hard_dice(counts), precision(counts), sensitivity(counts), counts)

    def to_row(self) -> Dict:
        row = {
            "case_id": self.case_id,
            "diagnosis": self.diagnosis.value,
            "region": self.region.value,
            "dice": self.dice,
            "precision": self.precision,
            "sensitivity": self.sensitivity,
        }
        row.update(asdict(self.counts))
        return row


def evaluate_case(case_id: str, diagnosis, prediction, truth, num_classes: int = 2) -> List[CaseMetrics]:
    """Score a predicted label volume against the truth.

    Two-class (and any non-BraTS) labels are scored as lesion vs background.
    Five-class BraTS labels yield one row per region: whole, core, enhancing.
    """
    pred = prediction.data if isinstance(prediction, LabelVolume) else np.asarray(prediction)
    true = truth.data if isinstance(truth, LabelVolume) else np.asarray(truth)
    if pred.shape != true.shape:
        raise MetricInputError(f"Case {case_id}: prediction shape {pred.shape} differs from truth {true.shape}")
    if num_classes != BRATS_NUM_CLASSES:
        return [CaseMetrics.from_counts(case_id, diagnosis, confusion(pred > 0, true > 0))]
    pred_regions = merge_brats_classes(pred)
    true_regions = merge_brats_classes(true)
    return [
        CaseMetrics.from_counts(case_id, diagnosis, confusion(pred_regions[region], true_regions[region]), region)
        for region in BRATS_REGIONS
    ]


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


@dataclass(frozen=True)
class SummaryRow:
    """Mean metrics of a diagnosis group (or the Total row) over one region."""
    group: str
    region: Region
    num_cases: int
    dice: Optional[float]
    precision: Optional[float]
    sensitivity: Optional[float]

    @classmethod
    def from_cases(cls, group: str, region: Region, cases: Sequence[CaseMetrics]) -> "SummaryRow":
        return cls(
            group,
            region,
            len(cases),
            _mean(c.dice for c in cases),
            _mean(c.precision for c in cases),
            _mean(c.sensitivity for c in cases),
        )

    def metric(self, name: str) -> Optional[float]:
        return getattr(self, name)


@dataclass
class EvalReport:
    """Per-case rows, per-group and overall means, and run metadata.

    Attributes:
        cases: One row per (case, region)
        summary: Group rows in report order followed by the Total row, per region
        metadata: model, sampler, loss and checkpoint identifiers
    """
    cases: List[CaseMetrics]
    summary: List[SummaryRow]
    metadata: Dict[str, str] = field(default_factory=dict)

    @property
    def regions(self) -> List[Region]:
        seen: List[Region] = []
        for row in self.summary:
            if row.region not in seen:
                seen.append(row.region)
        return seen

    def group_rows(self, region: Region = Region.LESION) -> List[SummaryRow]:
        return [row for row in self.summary if row.region == Region(region)]

    def overall(self, region: Region = Region.LESION) -> SummaryRow:
        for row in self.group_rows(region):
            if row.group == TOTAL_ROW:
                return row
        raise MetricInputError(f"Report has no rows for region '{Region(region).value}'")

    def group(self, name: str, region: Region = Region.LESION) -> SummaryRow:
        for row in self.group_rows(region):
            if row.group == name:
                return row
        raise KeyError(name)

    def case_frame(self) -> pd.DataFrame:
        return pd.DataFrame([c.to_row() for c in self.cases])

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {"group": r.group, "region": r.region.value, "num_cases": r.num_cases,
             "dice": r.dice, "precision": r.precision, "sensitivity": r.sensitivity}
            for r in self.summary
        ])


def aggregate(rows: Sequence[CaseMetrics], metadata: Optional[Dict[str, str]] = None) -> EvalReport:
    """Group per-case rows by diagnosis and compute unweighted means.

    Every supplementary-table diagnosis gets a row (empty groups have
    undefined means), followed by any other tag present and the Total row.
    Total is case-weighted: every case counts once regardless of group size.

    Raises:
        MetricInputError: no rows
    """
    rows = list(rows)
    if not rows:
        raise MetricInputError("Cannot aggregate an empty set of case metrics")

    groups = list(REPORT_DIAGNOSES)
    for row in rows:
        if row.diagnosis not in groups:
            groups.append(row.diagnosis)

    regions: List[Region] = []
    for row in rows:
        if row.region not in regions:
            regions.append(row.region)

    summary: List[SummaryRow] = []
    for region in regions:
        in_region = [r for r in rows if r.region == region]
        for diagnosis in groups:
            members = [r for r in in_region if r.diagnosis == diagnosis]
            summary.append(SummaryRow.from_cases(diagnosis.display_name, region, members))
        summary.append(SummaryRow.from_cases(TOTAL_ROW, region, in_region))
    return EvalReport(rows, summary, dict(metadata or {}))
