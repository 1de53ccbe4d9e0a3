"""
Report writers in the layouts of the published result tables.

- supplementary_table: one block per metric (DICE, SENSITIVITY, PRECISION),
  diagnosis rows Metastasis ... Total, one column per model
- table2: model, num parameters, batch sampler, loss function, val precision,
  val sensitivity, val hard-dice
- table3: BraTS region dice per model (whole, core, enhancing)
- table4: inference time (mm:ss) and parameter count per model
- lesion_type_chart: grouped bars per lesion type, one panel per metric

Undefined metrics print as "-".
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import altair as alt
import pandas as pd

from lesionbench.data_model import PathLike
from lesionbench.metrics import TOTAL_ROW, EvalReport, Region
from lesionbench.runner.evaluation import BenchResult

SUPPLEMENTARY_BLOCKS = (("DICE", "dice"), ("SENSITIVITY", "sensitivity"), ("PRECISION", "precision"))
TABLE2_COLUMNS = ("model", "num parameters", "batch sampler", "loss function",
                  "val precision", "val sensitivity", "val hard-dice")
TABLE3_COLUMNS = ("model", "batch-sampler", "loss_function", "whole", "core", "enhancing")
TABLE4_ROWS = ("Inference time (minutes:seconds)", "Number of parameters")
MISSING = "-"


def format_metric(value: Optional[float], digits: int = 2) -> str:
    return MISSING if value is None else f"{value:.{digits}f}"


def markdown_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(" --- " for _ in header) + "|"]
    lines.extend("| " + " | ".join(str(cell) for cell in row) + " |" for row in rows)
    return "\n".join(lines) + "\n"


def _column_names(reports: Sequence[EvalReport]) -> List[str]:
    labels = [r.metadata.get("model", f"model{i}") for i, r in enumerate(reports)]
    names = []
    for label, report in zip(labels, reports):
        if labels.count(label) > 1:
            label = f"{label}/{report.metadata.get('sampler', '')}/{report.metadata.get('loss', '')}"
        names.append(label)
    return names


def _group_names(reports: Sequence[EvalReport], region: Region) -> List[str]:
    names: List[str] = []
    for report in reports:
        for row in report.group_rows(region):
            if row.group != TOTAL_ROW and row.group not in names:
                names.append(row.group)
    return names + [TOTAL_ROW]


def _lookup(report: EvalReport, group: str, region: Region, metric: str) -> Optional[float]:
    try:
        return report.group(group, region).metric(metric)
    except KeyError:
        return None


def supplementary_table(reports: Sequence[EvalReport], region: Region = Region.LESION, digits: int = 2) -> str:
    """Per-lesion-type blocks for DICE, SENSITIVITY and PRECISION, one column per report."""
    columns = _column_names(reports)
    groups = _group_names(reports, region)
    blocks = []
    for title, metric in SUPPLEMENTARY_BLOCKS:
        rows = [[group] + [format_metric(_lookup(r, group, region, metric), digits) for r in reports]
                for group in groups]
        blocks.append(markdown_table([title, *columns], rows))
    return "\n".join(blocks)


def table2_row(report: EvalReport, digits: int = 2) -> List[str]:
    total = report.overall(report.regions[0])
    meta = report.metadata
    return [
        meta.get("model", ""),
        meta.get("num_parameters", ""),
        meta.get("sampler", ""),
        meta.get("loss", ""),
        format_metric(total.precision, digits),
        format_metric(total.sensitivity, digits),
        format_metric(total.dice, digits),
    ]


def table2(reports: Sequence[EvalReport], digits: int = 2) -> str:
    return markdown_table(TABLE2_COLUMNS, [table2_row(r, digits) for r in reports])


def table2_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    records = []
    for report in reports:
        total = report.overall(report.regions[0])
        meta = report.metadata
        records.append(dict(zip(TABLE2_COLUMNS, (
            meta.get("model", ""), meta.get("num_parameters", ""), meta.get("sampler", ""), meta.get("loss", ""),
            total.precision, total.sensitivity, total.dice,
        ))))
    return pd.DataFrame(records, columns=list(TABLE2_COLUMNS))


def table3(reports: Sequence[EvalReport], digits: int = 2) -> str:
    """Region-wise total dice of BraTS evaluations."""
    rows = []
    for report in reports:
        meta = report.metadata
        dice = [format_metric(_lookup(report, TOTAL_ROW, region, "dice"), digits)
                for region in (Region.WHOLE, Region.CORE, Region.ENHANCING)]
        rows.append([meta.get("model", ""), meta.get("sampler", ""), meta.get("loss", ""), *dice])
    return markdown_table(TABLE3_COLUMNS, rows)


def table4(results: Sequence[BenchResult]) -> str:
    header = ["", *(r.model for r in results)]
    rows = [
        [TABLE4_ROWS[0], *(r.minutes_seconds for r in results)],
        [TABLE4_ROWS[1], *(r.parameters_label for r in results)],
    ]
    return markdown_table(header, rows)


def lesion_type_frame(reports: Sequence[EvalReport], region: Region = Region.LESION) -> pd.DataFrame:
    records = []
    for column, report in zip(_column_names(reports), reports):
        for row in report.group_rows(region):
            if row.group == TOTAL_ROW:
                continue
            for title, metric in SUPPLEMENTARY_BLOCKS:
                value = row.metric(metric)
                if value is not None:
                    records.append({"lesion type": row.group, "model": column, "metric": title, "value": value})
    return pd.DataFrame(records, columns=["lesion type", "model", "metric", "value"])


def lesion_type_chart(reports: Sequence[EvalReport], region: Region = Region.LESION) -> alt.FacetChart:
    """Grouped bars of each metric per lesion type: one panel row per metric, one bar per model."""
    frame = lesion_type_frame(reports, region)
    groups = list(dict.fromkeys(frame["lesion type"]))
    return alt.Chart(frame).mark_bar().encode(
        x=alt.X("model:N", title=None, axis=alt.Axis(labels=False, ticks=False)),
        y=alt.Y("value:Q", scale=alt.Scale(domain=[0, 1]), title=None),
        color="model:N",
        tooltip=["lesion type", "model", "metric", alt.Tooltip("value:Q", format=".2f")],
    ).properties(width=50, height=140).facet(
        row=alt.Row("metric:N", sort=[title for title, _ in SUPPLEMENTARY_BLOCKS]),
        column=alt.Column("lesion type:N", sort=groups),
    )


def write_evaluation(report: EvalReport, out_dir: PathLike) -> Dict[str, Path]:
    """Write per-case CSV, summary CSV, supplementary markdown and table2 markdown/CSV (plus table3 for BraTS)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "cases": out_dir / "cases.csv",
        "summary": out_dir / "summary.csv",
        "supplementary": out_dir / "supplementary.md",
        "table2": out_dir / "table2.md",
        "table2_csv": out_dir / "table2.csv",
    }
    report.case_frame().to_csv(paths["cases"], index=False)
    report.summary_frame().to_csv(paths["summary"], index=False)
    paths["supplementary"].write_text(supplementary_table([report], report.regions[0]), encoding="utf-8")
    paths["table2"].write_text(table2([report]), encoding="utf-8")
    table2_frame([report]).to_csv(paths["table2_csv"], index=False)
    if Region.WHOLE in report.regions:
        paths["table3"] = out_dir / "table3.md"
        paths["table3"].write_text(table3([report]), encoding="utf-8")
    return paths


def save_chart(chart: alt.TopLevelMixin, path: PathLike) -> Path:
    """Save an altair chart as HTML or Vega-Lite JSON depending on the suffix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chart.save(str(path))
    return path
