"""CLI commands for experiments: inference benchmark and ablation sweeps."""

import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import click
from rich import box
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
from src.core.bench import STAGES, ablation_variants, bench_frames, run_bench, run_variant
from src.core.config import settings

logger = logging.getLogger(__name__)


def _int_list(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> List[int]:
    if not value:
        return []
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got '{value}'")


@click.command("bench")
@click.option("--checkpoint", "-c", required=True, type=click.Path(path_type=Path), help="Trained checkpoint")
@click.option("--dataset", "-d", type=click.Path(path_type=Path), help="Dataset to time (default: generated frames)")
@click.option("--rig", "rig_path", type=click.Path(path_type=Path), help="Camera rig JSON")
@click.option("--persons", type=click.IntRange(min=0), default=4, show_default=True, help="Persons per generated frame")
@click.option("--frames", type=click.IntRange(min=1), default=10, show_default=True, help="Generated frames")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a non-architectural key")
@click.option("--output", "-o", type=click.Path(path_type=Path), help="Write the timing report as JSON")
def bench(
    checkpoint: Path,
    dataset: Optional[Path],
    rig_path: Optional[Path],
    persons: int,
    frames: int,
    overrides: Tuple[str, ...],
    output: Optional[Path],
) -> None:
    """Time single-threaded inference per stage, excluding 2D detection."""
    regressor = load_regressor(checkpoint, overrides)
    config = regressor.config
    rig = load_camera_rig(rig_path, config, dataset)
    if dataset is not None:
        scene_frames = load_frames(dataset)
    else:
        scene_frames = bench_frames(config, rig, persons, frames, config.seed)

    report = run_bench(scene_frames, rig, regressor)

    table = Table(title=f"Inference per frame ({report.frames} frames, {report.poses} 2D poses)", box=box.ROUNDED)
    table.add_column("Stage", style="cyan")
    table.add_column("ms", justify="right")
    for stage in STAGES:
        table.add_row(stage, f"{report.stage_ms[stage]:.2f}")
    table.add_row("[bold]total[/bold]", f"[bold]{report.total_ms:.2f}[/bold]")
    console.print(table)
    console.print(f"  {report.fps:.1f} frames per second")
    for name, count in sorted(report.op_counts.items()):
        console.print(f"  {name}: {count}")
    if report.scaling_ratio is not None:
        console.print(f"  Sweep work ratio with doubled planes: {report.scaling_ratio:.3f}")

    if output is not None:
        body = {"config_hash": config.config_hash(), **report.to_dict()}
        output.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        console.print(f"[green]✓ Report written to {output}[/green]")


@click.command("ablate")
@run_options
@click.option("--planes", callback=_int_list, help="Person-level plane counts, e.g. 16,64")
@click.option("--rel-planes", callback=_int_list, help="Relative plane counts, e.g. 16,64")
@click.option("--cameras", callback=_int_list, help="Camera counts, e.g. 5,4,3,2")
@click.option("--argmax", "compare_argmax", is_flag=True, help="Compare local and standard soft-argmax")
@click.option("--random-viewpoints", "compare_viewpoints", is_flag=True, help="Compare fixed and random training rigs")
@click.option("--train-frames", type=click.IntRange(min=1), default=200, show_default=True, help="Training frames per variant")
@click.option("--test-frames", type=click.IntRange(min=1), default=50, show_default=True, help="Test frames per variant")
@click.option("--output", "-o", type=click.Path(path_type=Path), help="Directory with one sub-directory per variant")
def ablate(
    config_path: Optional[Path],
    overrides: Tuple[str, ...],
    seed: Optional[int],
    threads: Optional[int],
    planes: List[int],
    rel_planes: List[int],
    cameras: List[int],
    compare_argmax: bool,
    compare_viewpoints: bool,
    train_frames: int,
    test_frames: int,
    output: Optional[Path],
) -> None:
    """Train and evaluate one model per variant of a single config axis."""
    base = load_config(config_path, overrides, {"seed": seed})
    variants = ablation_variants(planes, rel_planes, cameras, compare_argmax, compare_viewpoints)
    configs = [(name, load_config(None, extra=values, base=base)) for name, values in variants]
    output = output or settings.data_dir / "ablate"

    table = Table(title="Ablation", box=box.ROUNDED)
    table.add_column("Variant", style="cyan")
    table.add_column("PCP", justify="right")
    table.add_column("MPJPE (mm)", justify="right")
    table.add_column("Depth recall@500", justify="right")
    for name, config in configs:
        console.print(f"[bold]{name}[/bold] ({config.config_hash()})")
        directory = output / name.replace("=", "_")
        try:
            report = run_variant(config, train_frames, test_frames, directory, resolve_threads(threads))
        except (RuntimeError, ValueError) as e:
            raise click.ClickException(f"Variant {name} failed: {e}") from e
        recall = f"{report.recall_at(500.0):.4f}" if report.recall_curve else "-"
        table.add_row(name, f"{report.pcp:.4f}", millimetres(report.mpjpe), recall)
    console.print(table)
    console.print(f"[green]✓ {len(configs)} variants written to {output}[/green]")
