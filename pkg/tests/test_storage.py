#!/usr/bin/env python
"""Test dataset, results, report and metrics files."""

import json
import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.core.config import RunConfig
from src.core.storage import (
    MetricsLog,
    RecordFormatError,
    ground_truth_result,
    read_config_hash,
    read_dataset,
    read_metrics,
    read_results,
    save_report,
    write_dataset,
    write_results,
)
from src.core.synth import default_rig, generate_frames
from src.models import EvalReport, FusedPose, FusedResult, PoseEstimate


@pytest.fixture
def frames():
    config = RunConfig(max_persons=3, num_cameras=3)
    return list(generate_frames(config, default_rig(3), seed=2, count=4))


def test_dataset_round_trip(tmp_path, frames):
    path = tmp_path / "dataset.jsonl"
    assert write_dataset(path, frames, "feedbeef") == 4

    loaded = read_dataset(path)

    assert [f.to_dict() for f in loaded] == [f.to_dict() for f in frames]
    assert read_config_hash(path) == "feedbeef"
    assert all(json.loads(line)["config_hash"] == "feedbeef" for line in path.read_text().splitlines())


def test_dataset_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_dataset(tmp_path / "missing.jsonl")

    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"config_hash": "x", "frame": \n')
    with pytest.raises(RecordFormatError, match=":1: invalid JSON"):
        read_dataset(broken)

    other = tmp_path / "other.jsonl"
    other.write_text('{"config_hash": "x", "result": {}}\n')
    with pytest.raises(RecordFormatError, match="without a frame"):
        read_dataset(other)


def test_blank_lines_are_skipped(tmp_path, frames):
    path = tmp_path / "dataset.jsonl"
    write_dataset(path, frames[:2], "h")
    path.write_text(path.read_text().replace("\n", "\n\n"))
    assert len(read_dataset(path)) == 2


def test_results_round_trip(tmp_path):
    estimate = PoseEstimate(
        joints=np.arange(45.0).reshape(15, 3),
        valid=[True] * 14 + [False],
        person_depth=4321.5,
        confidence=0.75,
        view=2,
        pose_index=1,
    )
    fused = FusedPose(joints=estimate.joints, valid=estimate.valid, confidence=0.75, provenance=[(2, 1)])
    result = FusedResult(frame_id=7, poses=[fused], estimates=[estimate])
    path = tmp_path / "results.jsonl"

    write_results(path, [result, FusedResult(frame_id=8)], "cafe")
    loaded = read_results(path)

    assert [r.to_dict() for r in loaded] == [result.to_dict(), FusedResult(frame_id=8).to_dict()]
    assert loaded[0].estimates[0].provenance == (2, 1)
    assert read_config_hash(path) == "cafe"


def test_dataset_reads_as_ground_truth_results(tmp_path, frames):
    path = tmp_path / "dataset.jsonl"
    write_dataset(path, frames, "h")
    results = read_results(path)
    for frame, result in zip(frames, results):
        assert result.frame_id == frame.frame_id
        assert result.to_dict() == ground_truth_result(frame).to_dict()
        assert all(p.confidence == 1.0 and p.valid.all() for p in result.poses)


def test_results_reject_unknown_records(tmp_path):
    path = tmp_path / "results.jsonl"
    path.write_text('{"config_hash": "x", "other": 1}\n')
    with pytest.raises(RecordFormatError, match="neither"):
        read_results(path)


def test_save_report(tmp_path):
    report = EvalReport(
        pcp=0.9,
        per_actor_pcp={0: 1.0, 1: 0.8},
        mpjpe=42.0,
        median_mpjpe=40.0,
        matched=5,
        missed=1,
        ap={25.0: 0.5, 50.0: 0.75},
        recall_curve=[(100.0, 0.5), (500.0, 1.0)],
    )
    paths = save_report(report, tmp_path / "report", "abc")

    body = json.loads(paths["json"].read_text())
    assert body["config_hash"] == "abc"
    assert body["ap"] == {"AP_25": 0.5, "AP_50": 0.75}
    assert body["per_actor_pcp"] == {"0": 1.0, "1": 0.8}

    csv_lines = paths["csv"].read_text().splitlines()
    assert csv_lines[0] == "# config_hash=abc"
    assert "pcp_actor_1,0.8" in csv_lines
    assert paths["recall"].read_text().splitlines()[1:] == ["threshold,recall", "100.0,0.5", "500.0,1.0"]


def test_save_report_without_matches(tmp_path):
    report = EvalReport(pcp=0.0, matched=0, missed=3)
    paths = save_report(report, tmp_path / "report", "abc")

    body = json.loads(paths["json"].read_text())
    assert body["mpjpe"] is None and body["median_mpjpe"] is None
    csv_lines = paths["csv"].read_text().splitlines()
    assert "mpjpe," in csv_lines and "median_mpjpe," in csv_lines


def test_metrics_log(tmp_path):
    path = tmp_path / "metrics.csv"
    log = MetricsLog(path, "abc")
    log.append(1, 812.5, 64.25)
    log.append(2, 640.0, 60.0, val_mae=533.125)

    assert path.read_text().splitlines()[0] == "# config_hash=abc"
    assert read_metrics(path) == [
        {"step": 1.0, "loss_pose": 812.5, "loss_joint": 64.25, "val_mae": None},
        {"step": 2.0, "loss_pose": 640.0, "loss_joint": 60.0, "val_mae": 533.125},
    ]
    assert len(log.rows) == 2
