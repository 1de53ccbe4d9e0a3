import pandas as pd
import pytest

from lesionbench.data_model import Diagnosis
from lesionbench.metrics import CaseMetrics, Region, aggregate
from lesionbench.runner.evaluation import BenchResult
from lesionbench.runner.reports import (
    format_metric,
    lesion_type_chart,
    lesion_type_frame,
    save_chart,
    supplementary_table,
    table2,
    table2_frame,
    table3,
    table4,
    write_evaluation,
)


def _meta(model="v_net", loss="ce_minus_log_dice", sampler="three_dim"):
    return {"model": model, "num_parameters": "1234", "sampler": sampler, "loss": loss, "checkpoint": "best.pt"}


@pytest.fixture
def lesion_report():
    rows = [
        CaseMetrics("m1", Diagnosis.METASTASIS, Region.LESION, 0.5, 0.5, 0.5),
        CaseMetrics("a1", Diagnosis.AVM, Region.LESION, 0.9, None, 0.8),
    ]
    return aggregate(rows, _meta())


@pytest.fixture
def brats_report():
    rows = [
        CaseMetrics("b1", Diagnosis.OTHER, Region.WHOLE, 0.8, 0.9, 0.7),
        CaseMetrics("b1", Diagnosis.OTHER, Region.CORE, 0.6, 0.6, 0.6),
        CaseMetrics("b1", Diagnosis.OTHER, Region.ENHANCING, 0.4, 0.5, 0.3),
    ]
    return aggregate(rows, _meta("deepmedic", "cross entropy", "uniform_patch3d"))


def test_format_metric():
    assert format_metric(None) == "-"
    assert format_metric(0.8166) == "0.82"
    assert format_metric(1.0, digits=3) == "1.000"


def test_supplementary_dice_block(lesion_report):
    text = supplementary_table([lesion_report])
    expected_dice = (
        "| DICE | v_net |\n"
        "| --- | --- |\n"
        "| Metastasis | 0.50 |\n"
        "| Meningioma | - |\n"
        "| Schwannoma | - |\n"
        "| Pituitary | - |\n"
        "| AVM | 0.90 |\n"
        "| Other tumors | - |\n"
        "| Total | 0.70 |\n"
    )
    blocks = text.split("\n\n")
    assert blocks[0] + "\n" == expected_dice
    assert blocks[1].startswith("| SENSITIVITY | v_net |")
    assert "| AVM | 0.80 |" in blocks[1]
    assert "| Total | 0.65 |" in blocks[1]
    assert blocks[2].startswith("| PRECISION | v_net |")
    assert "| AVM | - |" in blocks[2]
    assert "| Total | 0.50 |" in blocks[2]


def test_supplementary_columns_disambiguate_repeated_models(lesion_report):
    other = aggregate(lesion_report.cases, _meta(loss="weighted_ce"))
    header = supplementary_table([lesion_report, other]).splitlines()[0]
    assert header == "| DICE | v_net/three_dim/ce_minus_log_dice | v_net/three_dim/weighted_ce |"


def test_table2_layout(lesion_report):
    assert table2([lesion_report]) == (
        "| model | num parameters | batch sampler | loss function | val precision | val sensitivity | val hard-dice |\n"
        "| --- | --- | --- | --- | --- | --- | --- |\n"
        "| v_net | 1234 | three_dim | ce_minus_log_dice | 0.50 | 0.65 | 0.70 |\n"
    )
    frame = table2_frame([lesion_report])
    assert frame.loc[0, "val hard-dice"] == pytest.approx(0.7)


def test_table3_layout(brats_report):
    assert table3([brats_report]) == (
        "| model | batch-sampler | loss_function | whole | core | enhancing |\n"
        "| --- | --- | --- | --- | --- | --- |\n"
        "| deepmedic | uniform_patch3d | cross entropy | 0.80 | 0.60 | 0.40 |\n"
    )


def test_table4_layout():
    results = [BenchResult("v_net", 171.4, 8_232_274, 21), BenchResult("deepmedic", 65.0, 1_301_478, 21)]
    assert table4(results) == (
        "|  | v_net | deepmedic |\n"
        "| --- | --- | --- |\n"
        "| Inference time (minutes:seconds) | 02:51 | 01:05 |\n"
        "| Number of parameters | 8.23M | 1.3M |\n"
    )


def test_lesion_type_frame_skips_total_and_undefined(lesion_report):
    frame = lesion_type_frame([lesion_report])
    assert len(frame) == 5
    assert "Total" not in set(frame["lesion type"])
    avm = frame[frame["lesion type"] == "AVM"]
    assert set(avm["metric"]) == {"DICE", "SENSITIVITY"}


def test_chart_and_evaluation_files(tmp_path, lesion_report, brats_report):
    chart = lesion_type_chart([lesion_report])
    spec = chart.to_dict()
    assert spec["facet"]["row"]["field"] == "metric"
    assert save_chart(chart, tmp_path / "chart.html").exists()

    paths = write_evaluation(lesion_report, tmp_path / "lesion")
    assert "table3" not in paths
    assert all(path.exists() for path in paths.values())
    assert len(pd.read_csv(paths["cases"])) == 2

    brats_paths = write_evaluation(brats_report, tmp_path / "brats")
    assert brats_paths["table3"].read_text().startswith("| model | batch-sampler |")
