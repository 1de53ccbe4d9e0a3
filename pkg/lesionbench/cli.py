"""
Command line interface.

    lesionbench synth --n 60 --test 10 --out data/synth
    lesionbench import-brats BRATS2015_Training --out data/brats
    lesionbench preprocess --manifest data/raw/manifest.csv --out data/pre
    lesionbench train -c experiments/v_net_synthetic.yaml
    lesionbench evaluate --manifest data/synth/manifest.csv --checkpoint runs/v_net/best.pt --out reports/
    lesionbench predict --manifest data/synth/manifest.csv --checkpoint runs/v_net/best.pt --out preds/ --overlay
    lesionbench bench --manifest data/synth/manifest.csv --checkpoint runs/v_net/best.pt
    lesionbench compare -c experiments/v_net_synthetic.yaml
"""

import functools
from dataclasses import replace
from pathlib import Path
from typing import Optional, Tuple

import click

from lesionbench import __version__
from lesionbench.brats_import import import_brats
from lesionbench.data_model import Split, load_case, load_manifest, write_nifti
from lesionbench.errors import LesionBenchError
from lesionbench.overlay import export_overlay
from lesionbench.preprocess import CropSpec, preprocess_manifest
from lesionbench.runner import (
    bench_inference,
    evaluate,
    load_checkpoint,
    load_experiment,
    predict_case,
    run_loss_comparison,
    train,
)
from lesionbench.runner import reports
from lesionbench.runner.comparison import dice_by_kind
from lesionbench.synthgen import SynthConfig, generate_dataset
from lesionbench.utils.logger import logger
from lesionbench.utils.sentry import init_sentry, sentry

SPLIT_CHOICE = click.Choice([s.value for s in Split])


def handle_errors(command):
    """Turn domain errors into a clean exit status 1; report anything else to Sentry."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except LesionBenchError as e:
            logger.error(f"{type(e).__name__}: {e}")
            raise click.ClickException(str(e)) from e
        except click.ClickException:
            raise
        except Exception as e:
            sentry.capture_exception(e)
            raise
    return wrapper


@click.group()
@click.version_option(__version__, prog_name="lesionbench")
def main():
    """Brain-lesion segmentation benchmark."""
    init_sentry()


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="YAML file of SynthConfig fields; defaults otherwise.")
@click.option("--n", "num_cases", type=click.IntRange(min=1), default=60, show_default=True)
@click.option("--test", "num_test", type=click.IntRange(min=0), default=10, show_default=True,
              help="Number of cases assigned to the test split.")
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@handle_errors
def synth(config_path: Optional[Path], num_cases: int, num_test: int, seed: Optional[int], out_dir: Path):
    """Generate a synthetic lesion dataset with a manifest."""
    config = SynthConfig.from_yaml(config_path) if config_path else SynthConfig()
    if seed is not None:
        config = replace(config, seed=seed)
    manifest = generate_dataset(config, num_cases, out_dir, num_test=num_test)
    click.echo(f"Wrote {len(manifest)} cases to {out_dir / 'manifest.csv'}")


@main.command("import-brats")
@click.argument("root", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--test-fraction", type=click.FloatRange(0, 1, max_open=True), default=0.2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@handle_errors
def import_brats_command(root: Path, out_dir: Path, test_fraction: float, seed: int):
    """Convert a BraTS-2015 style .mha tree into NIfTI cases with a manifest."""
    manifest = import_brats(root, out_dir, test_fraction=test_fraction, seed=seed)
    click.echo(f"Imported {len(manifest)} patients to {out_dir / 'manifest.csv'}")


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--extent", type=(float, float, float), default=(200.0, 200.0, 200.0), show_default=True,
              help="Crop extent in mm (z y x).")
@click.option("--num-classes", type=click.IntRange(min=2), default=None)
@handle_errors
def preprocess(manifest_path: Path, out_dir: Path, extent: Tuple[float, float, float], num_classes: Optional[int]):
    """Crop to the brain mask and z-score every case of a manifest."""
    manifest = preprocess_manifest(load_manifest(manifest_path), out_dir, CropSpec(extent), num_classes)
    click.echo(f"Preprocessed {len(manifest)} cases into {out_dir}")


@main.command("train")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="Experiment YAML.")
@click.option("--device", default=None, help="torch device; defaults to the DEVICE setting.")
@handle_errors
def train_command(config_path: Path, device: Optional[str]):
    """Train a model as configured by an experiment file."""
    result = train(load_experiment(config_path), device=device)
    click.echo(f"Best validation dice {result.best_val_dice:.4f} at epoch {result.best_epoch}")
    click.echo(f"Checkpoint: {result.checkpoint_path}")
    click.echo(f"Training log: {result.log_path}")


@main.command("evaluate")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--checkpoint", "checkpoints", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, multiple=True, help="Repeat to compare several models in one table.")
@click.option("--split", type=SPLIT_CHOICE, default=Split.TEST.value, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--chart/--no-chart", default=True, show_default=True,
              help="Write the per-lesion-type bar chart as HTML.")
@handle_errors
def evaluate_command(manifest_path: Path, checkpoints: Tuple[Path, ...], split: str, out_dir: Path, chart: bool):
    """Score checkpoints on a split and write CSV and markdown reports."""
    manifest = load_manifest(manifest_path)
    results = []
    for checkpoint in checkpoints:
        report = evaluate(load_checkpoint(checkpoint), manifest, split)
        reports.write_evaluation(report, out_dir / checkpoint.parent.name)
        results.append(report)

    region = results[0].regions[0]
    (out_dir / "supplementary.md").write_text(reports.supplementary_table(results, region), encoding="utf-8")
    (out_dir / "table2.md").write_text(reports.table2(results), encoding="utf-8")
    reports.table2_frame(results).to_csv(out_dir / "table2.csv", index=False)
    if chart:
        reports.save_chart(reports.lesion_type_chart(results, region), out_dir / "lesion_types.html")
    click.echo(reports.table2(results))


@main.command("predict")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--split", type=SPLIT_CHOICE, default=Split.TEST.value, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--overlay", is_flag=True, help="Also write an axial PNG overlay per case.")
@handle_errors
def predict_command(manifest_path: Path, checkpoint: Path, split: str, out_dir: Path, overlay: bool):
    """Write predicted label volumes as NIfTI."""
    loaded = load_checkpoint(checkpoint)
    num_classes = loaded.model.config.num_classes
    rows = load_manifest(manifest_path).by_split(split).rows
    for row in rows:
        case = load_case(row, num_classes)
        prediction = predict_case(loaded, case)
        write_nifti(prediction.data, out_dir / f"{case.case_id}_pred.nii.gz", case.image.spacing, case.image.origin)
        if overlay:
            export_overlay(case.image, case.label, prediction, out_dir / f"{case.case_id}_overlay.png")
        logger.info(f"Predicted {case.case_id}: {int(prediction.foreground.sum())} foreground voxels")
    click.echo(f"Wrote {len(rows)} predictions to {out_dir}")


@main.command("bench")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--checkpoint", "checkpoints", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, multiple=True)
@click.option("--split", type=SPLIT_CHOICE, default=Split.TEST.value, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Markdown file for the timing table.")
@handle_errors
def bench_command(manifest_path: Path, checkpoints: Tuple[Path, ...], split: str, out_path: Optional[Path]):
    """Time full-split inference and report parameter counts."""
    manifest = load_manifest(manifest_path)
    results = [bench_inference(load_checkpoint(c), manifest, split) for c in checkpoints]
    table = reports.table4(results)
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(table, encoding="utf-8")
    click.echo(table)


@main.command("compare")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--loss", "kinds", multiple=True, default=("weighted_ce", "ce_minus_log_dice"), show_default=True)
@handle_errors
def compare_command(config_path: Path, kinds: Tuple[str, ...]):
    """Train identically seeded runs per loss kind and report held-out dice."""
    runs = run_loss_comparison(load_experiment(config_path), kinds)
    rows = [[kind, reports.format_metric(dice, 4)] for kind, dice in dice_by_kind(runs).items()]
    click.echo(reports.markdown_table(["loss function", "test hard-dice"], rows))


if __name__ == "__main__":
    main()
