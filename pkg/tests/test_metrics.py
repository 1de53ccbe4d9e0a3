import numpy as np
import pytest

from lesionbench.data_model import Diagnosis, LabelVolume
from lesionbench.errors import MetricInputError
from lesionbench.metrics import (
    TOTAL_ROW,
    CaseMetrics,
    ConfusionCounts,
    Region,
    aggregate,
    confusion,
    evaluate_case,
    hard_dice,
    merge_brats_classes,
    precision,
    sensitivity,
)


def _masks(pred, true):
    return np.array(pred, dtype=bool), np.array(true, dtype=bool)


def test_confusion_counts_partial_overlap():
    counts = confusion(*_masks([1, 1, 0, 0], [1, 0, 1, 0]))
    assert counts == ConfusionCounts(tp=1, fp=1, fn=1, tn=1)
    assert hard_dice(counts) == pytest.approx(0.5)


def test_metrics_of_a_known_example():
    counts = ConfusionCounts(tp=3, fp=1, fn=3, tn=93)
    assert hard_dice(counts) == pytest.approx(0.6)
    assert precision(counts) == pytest.approx(0.75)
    assert sensitivity(counts) == pytest.approx(0.5)


def test_empty_prediction_against_empty_truth():
    counts = confusion(np.zeros((3, 3)), np.zeros((3, 3)))
    assert hard_dice(counts) == 1.0
    assert precision(counts) is None
    assert sensitivity(counts) is None


def test_empty_prediction_against_lesion():
    counts = confusion(*_masks([0, 0, 0], [1, 1, 0]))
    assert hard_dice(counts) == 0.0
    assert precision(counts) is None
    assert sensitivity(counts) == 0.0


def test_confusion_rejects_misaligned_masks():
    with pytest.raises(MetricInputError):
        confusion(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(MetricInputError):
        ConfusionCounts(tp=-1)


def test_dice_is_harmonic_mean_of_precision_and_sensitivity():
    rng = np.random.default_rng(0)
    for _ in range(100):
        pred = rng.random((8, 8, 8)) > 0.7
        true = rng.random((8, 8, 8)) > 0.7
        counts = confusion(pred, true)
        p, s = precision(counts), sensitivity(counts)
        if p is None or s is None or p + s == 0:
            continue
        assert hard_dice(counts) == pytest.approx(2 * p * s / (p + s))


def test_confusion_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(100):
        pred = rng.random(50) > 0.5
        true = rng.random(50) > 0.6
        expected = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
        for p, t in zip(pred, true):
            key = ("t" if p == t else "f") + ("p" if p else "n")
            expected[key] += 1
        assert confusion(pred, true) == ConfusionCounts(**expected)


def test_brats_regions_are_nested():
    label = np.array([0, 1, 2, 3, 4, 2, 4])
    regions = merge_brats_classes(label)
    np.testing.assert_array_equal(regions[Region.WHOLE], [0, 1, 1, 1, 1, 1, 1])
    np.testing.assert_array_equal(regions[Region.CORE], [0, 1, 0, 1, 1, 0, 1])
    np.testing.assert_array_equal(regions[Region.ENHANCING], [0, 0, 0, 0, 1, 0, 1])

    rng = np.random.default_rng(2)
    random_regions = merge_brats_classes(rng.integers(0, 5, size=(6, 6, 6)))
    assert not (random_regions[Region.ENHANCING] & ~random_regions[Region.CORE]).any()
    assert not (random_regions[Region.CORE] & ~random_regions[Region.WHOLE]).any()


def test_brats_merge_rejects_out_of_range_labels():
    with pytest.raises(MetricInputError):
        merge_brats_classes(np.array([0, 5]))


def test_evaluate_case_two_class_and_brats():
    truth = np.zeros((4, 4, 4), dtype=np.uint8)
    truth[1:3, 1:3, 1:3] = 1
    rows = evaluate_case("c1", "avm", truth, LabelVolume(truth))
    assert len(rows) == 1
    assert rows[0].region == Region.LESION
    assert rows[0].dice == 1.0

    brats_truth = np.zeros((4, 4, 4), dtype=np.uint8)
    brats_truth[0, 0, :4] = [1, 2, 3, 4]
    brats_pred = brats_truth.copy()
    brats_pred[0, 0, 3] = 2
    rows = evaluate_case("b1", "other", brats_pred, brats_truth, num_classes=5)
    by_region = {row.region: row for row in rows}
    assert set(by_region) == {Region.WHOLE, Region.CORE, Region.ENHANCING}
    assert by_region[Region.WHOLE].dice == 1.0
    assert by_region[Region.CORE].dice == pytest.approx(2 * 2 / (2 * 2 + 1))
    assert by_region[Region.ENHANCING].dice == 0.0

    with pytest.raises(MetricInputError):
        evaluate_case("c2", "avm", np.zeros((2, 2)), np.zeros((2, 3)))


def _row(case_id, diagnosis, dice, precision_value=None, sensitivity_value=None):
    return CaseMetrics(case_id, Diagnosis.parse(diagnosis), Region.LESION, dice, precision_value, sensitivity_value)


def test_aggregate_group_means_and_row_order():
    rows = [
        _row("m1", "metastasis", 0.4, 0.5, 0.5),
        _row("m2", "metastasis", 0.8, None, 0.9),
        _row("a1", "avm", 1.0, 1.0, 1.0),
    ]
    report = aggregate(rows, {"model": "v_net"})
    names = [row.group for row in report.group_rows()]
    assert names == ["Metastasis", "Meningioma", "Schwannoma", "Pituitary", "AVM", "Other tumors", TOTAL_ROW]

    metastasis = report.group("Metastasis")
    assert metastasis.num_cases == 2
    assert metastasis.dice == pytest.approx(0.6)
    assert metastasis.precision == pytest.approx(0.5)
    assert report.group("Meningioma").dice is None
    assert report.overall().dice == pytest.approx((0.4 + 0.8 + 1.0) / 3)
    assert report.metadata["model"] == "v_net"
    with pytest.raises(KeyError):
        report.group("Glioma")


def test_total_is_case_weighted():
    rows = [_row(f"m{i}", "metastasis", 0.0) for i in range(3)] + [_row("a1", "avm", 1.0)]
    report = aggregate(rows)
    assert report.overall().dice == pytest.approx(0.25)
    group_mean = np.mean([report.group("Metastasis").dice, report.group("AVM").dice])
    assert group_mean == pytest.approx(0.5)


def test_aggregate_appends_extra_tags_before_total():
    report = aggregate([_row("s1", "synthetic", 0.7)])
    names = [row.group for row in report.group_rows()]
    assert names[-2:] == ["Synthetic", TOTAL_ROW]
    assert report.summary_frame().shape[0] == len(names)
    assert list(report.case_frame()["case_id"]) == ["s1"]


def test_aggregate_rejects_no_rows():
    with pytest.raises(MetricInputError):
        aggregate([])
