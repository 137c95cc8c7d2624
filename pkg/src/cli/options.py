"""Shared click options and loaders for the run commands."""

import functools
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import click
from pydantic import ValidationError
from rich.console import Console

from src.core.config import RunConfig, settings
from src.core.depthnets import DepthRegressor
from src.core.geometry import RigFormatError, load_rig
from src.core.storage import RecordFormatError, read_dataset
from src.core.synth import default_rig
from src.models import CameraRig, SceneFrame
from src.nn.checkpoint import CheckpointError

console = Console()
logger = logging.getLogger(__name__)


class MissingCheckpointError(click.ClickException):
    """Raised when a command needs a trained checkpoint that does not exist."""

    exit_code = 3

    def __init__(self, path: Path) -> None:
        super().__init__(f"Checkpoint not found: {path}")


def parse_overrides(items: Sequence[str]) -> Dict[str, str]:
    """Turn repeated `KEY=VALUE` strings into a dict."""
    overrides: Dict[str, str] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise click.UsageError(f"Expected KEY=VALUE, got '{item}'")
        overrides[key.strip().lower()] = value.strip()
    return overrides


def run_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """Add --config, --set, --seed and --threads to a command."""

    @click.option(
        "--config", "config_path", type=click.Path(path_type=Path), envvar="PSP_CONFIG",
        help="Run config file (KEY=value lines)",
    )
    @click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override one config key")
    @click.option("--seed", type=int, help="Random seed")
    @click.option("--threads", type=click.IntRange(min=1), help="Worker threads (1 for exact reproducibility)")
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        return func(*args, **kwargs)

    return wrapper


def load_config(
    config_path: Optional[Path],
    overrides: Sequence[str] = (),
    extra: Optional[Dict[str, Any]] = None,
    base: Optional[RunConfig] = None,
) -> RunConfig:
    """Build the run config; any problem becomes a usage error (exit code 2).

    Precedence, lowest first: config file (or `base`), `extra` from dedicated
    flags, then `--set` overrides.
    """
    values: Dict[str, Any] = {k: v for k, v in (extra or {}).items() if v is not None}
    values.update(parse_overrides(overrides))
    path = config_path or settings.config
    try:
        if base is not None:
            config = base.with_overrides(values)
        else:
            config = RunConfig.load(path, values)
    except ValidationError as e:
        raise click.UsageError(f"Invalid configuration:\n{e}") from e
    except (FileNotFoundError, ValueError) as e:
        raise click.UsageError(str(e)) from e
    logger.debug("config hash %s", config.config_hash())
    return config


def millimetres(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}"


def resolve_threads(threads: Optional[int]) -> int:
    return threads if threads is not None else settings.threads


def load_camera_rig(rig_path: Optional[Path], config: RunConfig, dataset: Optional[Path] = None) -> CameraRig:
    """Rig from `--rig`, else rig.json beside the dataset, else the default ring."""
    if rig_path is None and dataset is not None and (Path(dataset).parent / "rig.json").is_file():
        rig_path = Path(dataset).parent / "rig.json"
    if rig_path is None:
        return default_rig(config.num_cameras)
    try:
        return load_rig(rig_path)
    except (FileNotFoundError, RigFormatError, ValidationError) as e:
        raise click.UsageError(f"Cannot load rig {rig_path}: {e}") from e


def require_checkpoint(path: Path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpointError(path)
    return path


def load_regressor(checkpoint: Path, overrides: Sequence[str]) -> DepthRegressor:
    """Trained networks from `checkpoint` with `--set` overrides applied."""
    require_checkpoint(checkpoint)
    try:
        return DepthRegressor.load(checkpoint, parse_overrides(overrides))
    except ValidationError as e:
        raise click.UsageError(f"Invalid configuration:\n{e}") from e
    except CheckpointError as e:
        raise click.ClickException(f"Cannot load checkpoint: {e}") from e


def load_frames(path: Path) -> List[SceneFrame]:
    try:
        return read_dataset(path)
    except (FileNotFoundError, RecordFormatError, ValidationError) as e:
        raise click.ClickException(f"Cannot read dataset {path}: {e}") from e
