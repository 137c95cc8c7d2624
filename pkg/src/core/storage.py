"""JSON-lines datasets and results, report files and the training metrics log.

Every record line carries the config hash of the run that wrote it:

    dataset line:  {"config_hash": "...", "frame": {...SceneFrame...}}
    results line:  {"config_hash": "...", "result": {...FusedResult...}}
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Union

from src.models import EvalReport, FusedPose, FusedResult, SceneFrame


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class RecordFormatError(ValueError):
    """A JSON-lines record is neither a dataset frame nor a result."""


def _dumps(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def _read_lines(path: PathLike) -> Iterator[Dict[str, Any]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordFormatError(f"{path}:{lineno}: invalid JSON ({e})") from e


def write_dataset(path: PathLike, frames: Iterable[SceneFrame], config_hash: str) -> int:
    """Write one frame per line; returns the number of frames written."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for frame in frames:
            f.write(_dumps({"config_hash": config_hash, "frame": frame.to_dict()}) + "\n")
            count += 1
    logger.debug("Wrote %d frames to %s", count, path)
    return count


def read_dataset(path: PathLike) -> List[SceneFrame]:
    frames = []
    for record in _read_lines(path):
        if "frame" not in record:
            raise RecordFormatError(f"{path}: line without a frame record")
        frames.append(SceneFrame.from_dict(record["frame"]))
    return frames


def read_config_hash(path: PathLike) -> Optional[str]:
    """Config hash of the first record of a JSON-lines file."""
    for record in _read_lines(path):
        return record.get("config_hash")
    return None


def write_results(path: PathLike, results: Iterable[FusedResult], config_hash: str) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for result in results:
            f.write(_dumps({"config_hash": config_hash, "result": result.to_dict()}) + "\n")
            count += 1
    return count


def ground_truth_result(frame: SceneFrame) -> FusedResult:
    """The frame's own 3D persons dressed up as fused estimates with confidence 1."""
    return FusedResult(
        frame_id=frame.frame_id,
        poses=[FusedPose(joints=p.joints, valid=None, confidence=1.0, provenance=[]) for p in frame.persons],
    )


def read_results(path: PathLike) -> List[FusedResult]:
    """Load results; dataset lines are accepted and read as ground-truth estimates."""
    results = []
    for record in _read_lines(path):
        if "result" in record:
            results.append(FusedResult.from_dict(record["result"]))
        elif "frame" in record:
            results.append(ground_truth_result(SceneFrame.from_dict(record["frame"])))
        else:
            raise RecordFormatError(f"{path}: line is neither a result nor a frame")
    return results


def save_report(report: EvalReport, directory: PathLike, config_hash: str) -> Dict[str, Path]:
    """Write report.json, report.csv and recall.csv; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": directory / "report.json",
        "csv": directory / "report.csv",
        "recall": directory / "recall.csv",
    }
    body = {"config_hash": config_hash, **report.to_dict()}
    paths["json"].write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    header = f"# config_hash={config_hash}\n"
    paths["csv"].write_text(header + report.to_csv(), encoding="utf-8")
    paths["recall"].write_text(header + report.recall_csv(), encoding="utf-8")
    return paths


def _cell(value: Any) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


class MetricsLog:
    """Append-only CSV of training progress: step, L_pose, L_joint, val MAE."""

    FIELDS = ("step", "loss_pose", "loss_joint", "val_mae")

    def __init__(self, path: PathLike, config_hash: str) -> None:
        self.path = Path(path)
        self.rows: List[Dict[str, Any]] = []
        with open(self.path, "w", encoding="utf-8", newline="") as f:
            f.write(f"# config_hash={config_hash}\n")
            csv.writer(f, lineterminator="\n").writerow(self.FIELDS)

    def append(
        self, step: int, loss_pose: float, loss_joint: float, val_mae: Optional[float] = None
    ) -> None:
        row = {"step": step, "loss_pose": loss_pose, "loss_joint": loss_joint, "val_mae": val_mae}
        self.rows.append(row)
        with open(self.path, "a", encoding="utf-8", newline="") as f:
            csv.writer(f, lineterminator="\n").writerow([_cell(row[k]) for k in self.FIELDS])


def read_metrics(path: PathLike) -> List[Dict[str, Optional[float]]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return [
        {k: (float(v) if v else None) for k, v in row.items()}
        for row in csv.DictReader(lines)
    ]
