"""CLI commands for the data path: synth, train, infer and eval."""

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import click
from pydantic import ValidationError
from rich import box
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table

from src.cli.options import (
    console,
    load_camera_rig,
    load_config,
    load_frames,
    load_regressor,
    millimetres,
    resolve_threads,
    run_options,
)
from src.core.config import settings
from src.core.evaluation import Evaluator
from src.core.geometry import save_rig
from src.core.pipeline import TrainingDivergedError, run_inference, train
from src.core.storage import (
    RecordFormatError,
    read_config_hash,
    read_results,
    save_report,
    write_dataset,
    write_results,
)
from src.core.synth import generate_frames, sample_rig

logger = logging.getLogger(__name__)


def _progress() -> Progress:
    return Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    )


@click.command("synth")
@run_options
@click.option("--frames", type=click.IntRange(min=1), help="Number of frames to generate")
@click.option("--persons", type=int, help="Exact number of persons per frame")
@click.option("--cameras", type=int, help="Number of cameras in the rig")
@click.option("--rig", "rig_path", type=click.Path(path_type=Path), help="Camera rig JSON (default: evenly spaced ring)")
@click.option("--output", "-o", type=click.Path(path_type=Path), help="Output directory")
@click.option("--start", type=click.IntRange(min=0), default=0, show_default=True, help="First frame id")
def synth(
    config_path: Optional[Path],
    overrides: Tuple[str, ...],
    seed: Optional[int],
    threads: Optional[int],
    frames: Optional[int],
    persons: Optional[int],
    cameras: Optional[int],
    rig_path: Optional[Path],
    output: Optional[Path],
    start: int,
) -> None:
    """Generate a synthetic multi-view dataset.

    Writes rig.json, dataset.jsonl and config.env into the output directory.
    """
    extra = {"frames": frames, "seed": seed, "num_cameras": cameras}
    if persons is not None:
        extra.update(min_persons=persons, max_persons=persons)
    config = load_config(config_path, overrides, extra)
    rig = load_camera_rig(rig_path, config)
    if rig_path is None and config.random_viewpoints:
        rig = sample_rig(config.seed, config.num_cameras)

    output = output or settings.data_dir / "synth"
    output.mkdir(parents=True, exist_ok=True)
    config_hash = config.config_hash()
    save_rig(rig, output / "rig.json", config_hash)
    config.save(output / "config.env")

    counts: Dict[int, int] = {}
    observed = 0

    def tally(stream):
        nonlocal observed
        for frame in stream:
            counts[len(frame.persons)] = counts.get(len(frame.persons), 0) + 1
            observed += sum(len(v.poses) for v in frame.views)
            progress.advance(task)
            yield frame

    with _progress() as progress:
        task = progress.add_task("Generating frames", total=config.frames)
        stream = generate_frames(config, rig, count=config.frames, start=start, threads=resolve_threads(threads))
        written = write_dataset(output / "dataset.jsonl", tally(stream), config_hash)

    table = Table(title=f"Synthetic dataset ({config_hash})", box=box.ROUNDED)
    table.add_column("Persons per frame", justify="right")
    table.add_column("Frames", justify="right")
    for n in sorted(counts):
        table.add_row(str(n), str(counts[n]))
    console.print(table)
    console.print(
        f"[green]✓ Wrote {written} frames ({observed} 2D poses, {len(rig)} cameras) to {output}[/green]"
    )


@click.command("train")
@run_options
@click.option("--dataset", "-d", required=True, type=click.Path(path_type=Path), help="Dataset JSON-lines file")
@click.option("--rig", "rig_path", type=click.Path(path_type=Path), help="Camera rig JSON (default: rig.json beside the dataset)")
@click.option("--epochs", type=click.IntRange(min=1), help="Training epochs")
@click.option("--output", "-o", type=click.Path(path_type=Path), help="Directory for checkpoints and metrics")
def train_command(
    config_path: Optional[Path],
    overrides: Tuple[str, ...],
    seed: Optional[int],
    threads: Optional[int],
    dataset: Path,
    rig_path: Optional[Path],
    epochs: Optional[int],
    output: Optional[Path],
) -> None:
    """Train the person-level and joint-level depth networks."""
    config = load_config(config_path, overrides, {"seed": seed, "epochs": epochs})
    rig = load_camera_rig(rig_path, config, dataset)
    frames = load_frames(dataset)
    output = output or settings.data_dir / "train"

    with _progress() as progress:
        task = progress.add_task("Training", total=config.epochs)

        def on_epoch(epoch: int, summary: Dict[str, Optional[float]]) -> None:
            progress.advance(task)

        try:
            result = train(frames, rig, config, output, resolve_threads(threads), on_epoch)
        except TrainingDivergedError as e:
            raise click.ClickException(str(e)) from e
        except ValueError as e:
            raise click.ClickException(f"Training failed: {e}") from e

    final = result.history[-1]
    console.print(
        f"[green]✓ Trained {config.epochs} epochs: L_pose {final['loss_pose']:.2f} mm, "
        f"L_joint {final['loss_joint']:.2f} mm[/green]"
    )
    if result.val_mae is not None:
        console.print(f"  Validation person-depth MAE: {result.val_mae:.2f} mm")
    console.print(f"  Checkpoint: {result.checkpoint}")


@click.command("infer")
@click.option("--checkpoint", "-c", required=True, type=click.Path(path_type=Path), help="Trained checkpoint")
@click.option("--dataset", "-d", required=True, type=click.Path(path_type=Path), help="Dataset JSON-lines file")
@click.option("--rig", "rig_path", type=click.Path(path_type=Path), help="Camera rig JSON (default: rig.json beside the dataset)")
@click.option("--output", "-o", type=click.Path(path_type=Path), help="Results JSON-lines file")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a non-architectural key")
@click.option("--threads", type=click.IntRange(min=1), help="Worker threads (1 for exact reproducibility)")
def infer(
    checkpoint: Path,
    dataset: Path,
    rig_path: Optional[Path],
    output: Optional[Path],
    overrides: Tuple[str, ...],
    threads: Optional[int],
) -> None:
    """Estimate 3D poses for every frame of a dataset."""
    regressor = load_regressor(checkpoint, overrides)
    rig = load_camera_rig(rig_path, regressor.config, dataset)
    frames = load_frames(dataset)
    output = output or dataset.parent / "results.jsonl"

    with _progress() as progress:
        task = progress.add_task("Inferring", total=len(frames))

        def tracked():
            for result in run_inference(frames, rig, regressor, resolve_threads(threads)):
                progress.advance(task)
                yield result

        count = write_results(output, tracked(), regressor.config.config_hash())

    console.print(f"[green]✓ Wrote {count} fused results to {output}[/green]")


@click.command("eval")
@click.option("--dataset", "-d", required=True, type=click.Path(path_type=Path), help="Ground-truth dataset")
@click.option("--results", "-r", required=True, type=click.Path(path_type=Path), help="Results JSON-lines file")
@click.option("--rig", "rig_path", type=click.Path(path_type=Path), help="Camera rig JSON (default: rig.json beside the dataset)")
@click.option("--output", "-o", type=click.Path(path_type=Path), help="Report directory")
@click.option("--match-distance", type=float, default=500.0, show_default=True, help="Hip distance (mm) for MPJPE matching")
def evaluate(
    dataset: Path,
    results: Path,
    rig_path: Optional[Path],
    output: Optional[Path],
    match_distance: float,
) -> None:
    """Score results against ground truth (PCP, MPJPE, AP, depth recall)."""
    frames = load_frames(dataset)
    try:
        estimates = {r.frame_id: r for r in read_results(results)}
    except (FileNotFoundError, RecordFormatError, ValidationError) as e:
        raise click.ClickException(f"Cannot read results {results}: {e}") from e
    config = load_config(None, extra={})
    rig = load_camera_rig(rig_path, config, dataset)

    evaluator = Evaluator(rig, match_distance=match_distance)
    missing = 0
    for frame in frames:
        result = estimates.get(frame.frame_id)
        if result is None:
            missing += 1
            continue
        evaluator.add(frame, result)
    if missing:
        console.print(f"[yellow]⚠ {missing} frames have no result and were skipped[/yellow]")
    if not evaluator.frames:
        raise click.ClickException("No frame of the dataset has a result")

    report = evaluator.report()
    config_hash = read_config_hash(results) or ""
    paths = save_report(report, output or results.parent / "report", config_hash)

    table = Table(title="Evaluation", box=box.ROUNDED)
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("Frames", str(evaluator.frames))
    table.add_row("PCP", f"{report.pcp:.4f}")
    table.add_row("MPJPE (mm)", millimetres(report.mpjpe))
    table.add_row("Median MPJPE (mm)", millimetres(report.median_mpjpe))
    table.add_row("Matched / missed", f"{report.matched} / {report.missed}")
    for threshold, value in sorted(report.ap.items()):
        table.add_row(f"AP@{threshold:g}", f"{value:.4f}")
    if report.recall_curve:
        table.add_row("Depth recall@500", f"{report.recall_at(500.0):.4f}")
    console.print(table)
    console.print(f"[green]✓ Report written to {paths['json'].parent}[/green]")
