"""
CLI Interface

Command-line interface for pose-to-sensor experiments.
Provides commands: preprocess, synth, train, eval, gradcheck, report.
"""

import csv
import functools
import sys
from pathlib import Path

import click
import numpy as np
from rich.console import Console
from rich.table import Table

from core.engine.gradcheck import run_gradient_suite
from core.errors import DataError, Skel2SenseError, describe
from core.evaluation import evaluate_classifier, synthesize, test_mse
from core.formats.checkpoint import read_checkpoint_with_metadata
from core.formats.experiment_config import METHODS, ExperimentConfig, load_config
from core.formats.interchange import write_dataset, write_matrix
from core.formats.report import history_name, report_name, summarize_reports, write_history, write_report
from core.logging_config import configure_logging
from core.settings import load_settings
from core.splits import DEFAULT_RATE_HZ, build_splits
from core.synthdata import SPLITS, default_classes, generate_sessions
from core.training import run_multi_seed


console = Console()

WINDOW_STORE_DIR = "windows"


def handle_errors(command):
    """Render library errors as one `error[<category>]: ...` line and exit with their code."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except Skel2SenseError as e:
            click.echo(describe(e), err=True)
            sys.exit(e.exit_code)
        except OSError as e:
            error = DataError(str(e))
            click.echo(describe(error), err=True)
            sys.exit(error.exit_code)

    return wrapper


def config_option(required: bool = True):
    return click.option(
        "--config", "config_path", required=required,
        type=click.Path(dir_okay=False), help="Experiment config (key = value)",
    )


out_option = click.option(
    "--out", "out_dir", default="./runs", show_default=True,
    type=click.Path(file_okay=False), help="Directory for every artifact",
)
seed_option = click.option("--seed", type=int, default=None, help="Run only this seed (overrides the config)")
method_option = click.option("--method", type=click.Choice(METHODS), default=None, help="Training method")


def _setup():
    settings = load_settings()
    configure_logging(settings)
    return settings


def _load(config_path, seed=None, method=None) -> ExperimentConfig:
    return load_config(config_path).with_overrides(seed=seed, method=method)


@click.group()
def cli():
    """Skel2Sense - wrist accelerometer synthesis from skeleton poses"""
    pass


@cli.command()
@config_option()
@out_option
@click.option("--force", is_flag=True, help="Re-process every session")
@handle_errors
def preprocess(config_path, out_dir, force):
    """
    Window and standardize the configured dataset into OUT/windows.

    Examples:
        skel2sense preprocess --config config/desk.conf --out runs/desk
    """
    settings = _setup()
    config = _load(config_path)
    splits = build_splits(config, settings, Path(out_dir) / WINDOW_STORE_DIR, force=force)

    table = Table(title="Window Sets", show_header=True)
    table.add_column("Split", style="cyan")
    table.add_column("Windows", style="white", justify="right")
    for split in SPLITS:
        table.add_row(split, str(len(getattr(splits, split))))
    console.print(table)


@cli.command()
@config_option(required=False)
@out_option
@seed_option
@handle_errors
def synth(config_path, out_dir, seed):
    """
    Write the synthetic kinematic dataset in interchange format.

    Examples:
        skel2sense synth --out data/desk --seed 7
    """
    settings = _setup()
    config = _load(config_path) if config_path else None
    defaults = settings.synth
    overrides = config.synth if config else None

    def pick(name):
        value = getattr(overrides, name) if overrides else None
        return getattr(defaults, name) if value is None else value

    specs = default_classes(pick("n_classes"), pick("noise_std"))
    counts = {split: pick(f"{split}_windows") for split in SPLITS}
    data_seed = seed if seed is not None else (overrides.seed if overrides else 0)
    size_s = config.window.size_s if config else 3.0
    rate = (config.window.rate_hz if config else None) or DEFAULT_RATE_HZ

    sessions = generate_sessions(specs, counts, data_seed, size_s, rate)
    manifest = write_dataset(
        out_dir, "synthetic", [s for split in SPLITS for s in sessions[split]], [spec.name for spec in specs]
    )
    console.print(f"[green]Wrote {len(manifest.sessions)} sessions to {out_dir}[/green]")


@cli.command()
@config_option()
@out_option
@seed_option
@method_option
@click.option("--parallel", type=click.IntRange(min=1), default=1, show_default=True,
              help="Seeds trained concurrently")
@handle_errors
def train(config_path, out_dir, seed, method, parallel):
    """
    Train every configured seed; writes the report, histories and checkpoints.

    Examples:
        skel2sense train --config config/desk.conf --method joint --out runs/desk
    """
    settings = _setup()
    config = _load(config_path, seed, method)
    out = Path(out_dir)
    splits = build_splits(config, settings, out / WINDOW_STORE_DIR)
    train_config = config.resolve(settings, splits.segmented)

    result = run_multi_seed(splits, train_config, parallel=parallel, checkpoint_dir=out)
    write_report(result, out / report_name(result.method))
    for seed_result in result.seeds:
        write_history(seed_result, out / history_name(result.method, seed_result.seed))

    table = Table(title=f"Results: {result.method}", show_header=True)
    table.add_column("Seed", style="cyan")
    table.add_column("Macro-F1", justify="right")
    table.add_column("Accuracy", justify="right")
    table.add_column("Test MSE", justify="right")
    table.add_column("Stopped", justify="right")
    for r in result.seeds:
        table.add_row(str(r.seed), f"{r.f1:.4f}", f"{r.accuracy:.4f}",
                      "-" if r.test_mse is None else f"{r.test_mse:.4f}", str(r.stopped_epoch))
    console.print(table)


@cli.command(name="eval")
@config_option()
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True, dir_okay=False))
@out_option
@click.option("--dump", type=click.IntRange(min=0), default=0, show_default=True,
              help="Write real vs synthetic signals for the first N test windows")
@handle_errors
def evaluate(config_path, checkpoint_path, out_dir, dump):
    """
    Evaluate a checkpoint on the test split.

    Examples:
        skel2sense eval --config config/desk.conf --checkpoint runs/desk/checkpoint_joint_seed1.p2s
    """
    settings = _setup()
    config = _load(config_path)
    out = Path(out_dir)
    splits = build_splits(config, settings, out / WINDOW_STORE_DIR)
    bundle, metadata = read_checkpoint_with_metadata(checkpoint_path)
    if bundle.classifier.n_classes != splits.n_classes:
        raise DataError(
            f"checkpoint predicts {bundle.classifier.n_classes} classes, dataset has {splits.n_classes}"
        )

    f1, acc, cm = evaluate_classifier(bundle, splits.test)
    table = Table(title=f"Evaluation: {Path(checkpoint_path).name}", show_header=False)
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="white")
    table.add_row("Method", str(metadata.get("method", "?")))
    table.add_row("Macro-F1", f"{f1:.4f}")
    table.add_row("Accuracy", f"{acc:.4f}")
    if bundle.regressor is not None:
        table.add_row("Test MSE", f"{test_mse(bundle.regressor, splits.test):.4f}")
    console.print(table)

    if dump:
        if bundle.regressor is None:
            raise DataError("--dump needs a checkpoint with a regressor")
        count = min(dump, len(splits.test))
        subset = splits.test.subset(np.arange(count))
        synthetic = synthesize(bundle.regressor, subset)
        times = np.arange(subset.sensor.shape[-1]) / splits.rate_hz
        header = ["time_s", "real_ax", "real_ay", "real_az", "synth_ax", "synth_ay", "synth_az"]
        for i in range(count):
            write_matrix(out / "dumps" / f"window_{i:04d}.csv", header,
                         np.column_stack([times, subset.sensor[i].T, synthetic[i].T]))
        console.print(f"[green]Wrote {count} signal dumps to {out / 'dumps'}[/green]")


@cli.command()
@click.option("--dtype", type=click.Choice(["float64", "float32", "both"]), default="both", show_default=True)
@click.option("--points", type=click.IntRange(min=1), default=10, show_default=True)
@seed_option
@handle_errors
def gradcheck(dtype, points, seed):
    """Finite-difference check of every differentiable op; exit 0 iff all pass."""
    _setup()
    dtypes = ["float64", "float32"] if dtype == "both" else [dtype]
    table = Table(title="Gradient Check", show_header=True)
    table.add_column("Op", style="cyan")
    table.add_column("Dtype")
    table.add_column("Max error", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Status")
    failed = 0
    for name in dtypes:
        for result in run_gradient_suite(np.dtype(name), points, seed or 0):
            failed += not result.passed
            table.add_row(
                result.op, result.dtype, f"{result.max_error:.2e}", f"{result.tolerance:.0e}",
                "[green]pass[/green]" if result.passed else "[red]FAIL[/red]",
            )
    console.print(table)
    if failed:
        click.echo(f"error[engine]: {failed} gradient check(s) exceeded tolerance", err=True)
        sys.exit(1)


@cli.command()
@out_option
@handle_errors
def report(out_dir):
    """Summarize every report_*.csv under OUT into summary.csv."""
    _setup()
    path = summarize_reports(out_dir)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    table = Table(title="Summary (mean ± population std)", show_header=True)
    for column in rows[0]:
        table.add_column(column, style="cyan" if column == "method" else None)
    for row in rows[1:]:
        table.add_row(*row)
    console.print(table)


if __name__ == '__main__':
    cli()
