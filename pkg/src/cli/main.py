"""Main CLI entry point for plane-sweep pose estimation."""

import logging

import click
from rich.logging import RichHandler

from src import __version__
from src.core.config import settings
from src.cli.data_commands import evaluate, infer, synth, train_command
from src.cli.experiment_commands import ablate, bench

# Configure logging
logging.basicConfig(
    level=settings.log_level,
    format="%(message)s",
    datefmt="[%X]",
    handlers=[RichHandler(rich_tracebacks=True)]
)


@click.group()
@click.version_option(version=__version__, prog_name="psp")
@click.pass_context
def cli(ctx: click.Context) -> None:
    """Plane-sweep multi-view multi-person 3D pose estimation.

    Hyperparameters come from a KEY=value config file (--config or
    PSP_CONFIG); --set KEY=VALUE overrides single keys.

    Quick start:
    1. Generate data: psp synth --frames 500 --output data/synth
    2. Train: psp train --dataset data/synth/dataset.jsonl --output data/model
    3. Infer: psp infer --checkpoint data/model/model.ckpt --dataset data/synth/dataset.jsonl
    4. Score: psp eval --dataset data/synth/dataset.jsonl --results data/synth/results.jsonl
    """
    ctx.ensure_object(dict)


# Add subcommands
cli.add_command(synth)
cli.add_command(train_command)
cli.add_command(infer)
cli.add_command(evaluate)
cli.add_command(bench)
cli.add_command(ablate)


if __name__ == "__main__":
    cli()
