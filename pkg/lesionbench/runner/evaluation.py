"""
Held-out evaluation and inference benchmarking of a trained model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Union

from lesionbench.data_model import CaseRecord, DatasetManifest, Diagnosis, LabelVolume, Split, load_case
from lesionbench.errors import DataError
from lesionbench.metrics import CaseMetrics, EvalReport, aggregate, evaluate_case
from lesionbench.models import format_parameter_count
from lesionbench.runner.checkpoint import LoadedModel
from lesionbench.runner.predictor import predict_case
from lesionbench.utils.logger import bind_run_id, logger

Predictor = Callable[[CaseRecord], LabelVolume]


def report_metadata(loaded: LoadedModel) -> dict:
    """Identifiers of a model in the result tables' spelling."""
    return {
        "model": loaded.label,
        "num_parameters": str(loaded.num_parameters),
        "sampler": loaded.experiment.sampler.key,
        "loss": loaded.experiment.loss.kind,
        "checkpoint": loaded.checkpoint_id,
    }


def _rows_for_split(manifest: DatasetManifest, split: Union[str, Split]):
    rows = manifest.by_split(split).rows
    kept = [row for row in rows if row.diagnosis != Diagnosis.TN]
    if len(kept) < len(rows):
        logger.warning(f"Skipping {len(rows) - len(kept)} lesion-free (tn) case(s) in the {Split.parse(split).value} split")
    if not kept:
        raise DataError(f"The {Split.parse(split).value} split has no evaluable cases")
    return kept


def evaluate_cases(loaded: LoadedModel, cases: Iterable[CaseRecord], predictor: Optional[Predictor] = None) -> EvalReport:
    """Predict, score and aggregate a sequence of cases.

    Args:
        loaded: Restored model; also supplies the report metadata
        cases: Cases to evaluate
        predictor: Replaces predict_case, e.g. to score a fixed prediction
    """
    predictor = predictor or (lambda case: predict_case(loaded, case))
    num_classes = loaded.model.config.num_classes
    rows: List[CaseMetrics] = []
    for case in cases:
        prediction = predictor(case)
        case_rows = evaluate_case(case.case_id, case.diagnosis, prediction, case.label, num_classes)
        rows.extend(case_rows)
        logger.debug(f"{case.case_id}: dice {', '.join(f'{r.dice:.4f}' for r in case_rows)}")
    return aggregate(rows, report_metadata(loaded))


def evaluate(loaded: LoadedModel, manifest: DatasetManifest, split: Union[str, Split] = Split.TEST,
             predictor: Optional[Predictor] = None) -> EvalReport:
    """Evaluate a model on one split of a manifest.

    Lesion-free (tn) cases are skipped with a warning: their dice is
    undefined under the binary protocol.

    Raises:
        DataError: no evaluable case in the split
    """
    rows = _rows_for_split(manifest, split)
    num_classes = loaded.model.config.num_classes
    with bind_run_id(f"evaluate-{loaded.checkpoint_id}"):
        report = evaluate_cases(loaded, (load_case(row, num_classes) for row in rows), predictor)
        total = report.overall(report.regions[0])
        logger.info(f"Evaluated {loaded.label} on {len(rows)} case(s): dice {total.dice}")
    return report


@dataclass(frozen=True)
class BenchResult:
    model: str
    seconds: float
    num_parameters: int
    num_cases: int

    @property
    def minutes_seconds(self) -> str:
        """Elapsed time as mm:ss, e.g. 02:51."""
        minutes, seconds = divmod(int(round(self.seconds)), 60)
        return f"{minutes:02d}:{seconds:02d}"

    @property
    def parameters_label(self) -> str:
        return format_parameter_count(self.num_parameters)


def bench_inference(loaded: LoadedModel, manifest: DatasetManifest,
                    split: Union[str, Split] = Split.TEST) -> BenchResult:
    """Wall-clock time of predicting every case of a split, plus the parameter count.

    Only prediction is timed; reading the cases from disk is not.
    """
    rows = _rows_for_split(manifest, split)
    num_classes = loaded.model.config.num_classes
    elapsed = 0.0
    with bind_run_id(f"bench-{loaded.checkpoint_id}"):
        for row in rows:
            case = load_case(row, num_classes)
            started = time.perf_counter()
            predict_case(loaded, case)
            elapsed += time.perf_counter() - started
        result = BenchResult(loaded.label, elapsed, loaded.num_parameters, len(rows))
        logger.info(f"Inference on {len(rows)} case(s) with {loaded.label}: {result.minutes_seconds}")
    return result
