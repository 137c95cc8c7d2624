#!/usr/bin/env python
"""Test the psp command-line interface end to end with click's runner."""

import json
import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

import pytest
from click.testing import CliRunner

from src import __version__
from src.cli.main import cli
from src.core.config import RunConfig
from src.core.geometry import load_rig
from src.core.storage import read_dataset, read_results
from src.nn import Conv1d, save_checkpoint

SMALL = [
    "--set", "num_planes=16",
    "--set", "num_rel_planes=16",
    "--set", "person_hidden=8",
    "--set", "person_blocks=1",
    "--set", "joint_hidden=8",
    "--set", "joint_dilations=1,2",
    "--set", "max_persons=2",
    "--set", "batch_size=16",
]


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A tiny synthetic dataset plus a one-epoch checkpoint."""
    root = tmp_path_factory.mktemp("run")
    runner = CliRunner()
    data = root / "data"
    result = invoke(runner, "synth", "--frames", 4, "--cameras", 3, "--seed", 5, "-o", data, *SMALL)
    assert result.exit_code == 0, result.output
    model = root / "model"
    result = invoke(
        runner, "train", "-d", data / "dataset.jsonl", "--config", data / "config.env", "--epochs", 1, "-o", model
    )
    assert result.exit_code == 0, result.output
    return data, model / "model.ckpt"


def test_version(runner):
    result = invoke(runner, "--version")
    assert result.exit_code == 0
    assert __version__ in result.output


def test_help_lists_commands(runner):
    result = invoke(runner, "--help")
    assert result.exit_code == 0
    for name in ("synth", "train", "infer", "eval", "bench", "ablate"):
        assert name in result.output


# -- synth --------------------------------------------------------------------------


def test_synth_is_reproducible(runner, tmp_path):
    outputs = []
    for name, threads in (("a", 1), ("b", 1), ("c", 3)):
        out = tmp_path / name
        result = invoke(runner, "synth", "--frames", 3, "--seed", 7, "--cameras", 3, "--threads", threads, "-o", out)
        assert result.exit_code == 0, result.output
        assert "✓ Wrote 3 frames" in result.output
        outputs.append((out / "dataset.jsonl").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]

    out = tmp_path / "a"
    assert len(load_rig(out / "rig.json")) == 3
    config = RunConfig.load(out / "config.env")
    assert config.seed == 7 and config.num_cameras == 3
    assert json.loads((out / "rig.json").read_text())["config_hash"] == config.config_hash()


def test_synth_exact_person_count(runner, tmp_path):
    result = invoke(runner, "synth", "--frames", 2, "--persons", 3, "-o", tmp_path)
    assert result.exit_code == 0, result.output
    assert all(len(f.persons) == 3 for f in read_dataset(tmp_path / "dataset.jsonl"))


@pytest.mark.parametrize(
    "args",
    [
        ("--persons", 0),
        ("--set", "num_plane=3"),
        ("--set", "sigma"),
        ("--config", "/nonexistent/run.env"),
        ("--frames", 0),
    ],
)
def test_synth_usage_errors(runner, tmp_path, args):
    result = invoke(runner, "synth", *args, "-o", tmp_path)
    assert result.exit_code == 2


# -- infer and eval -----------------------------------------------------------------


def test_infer_without_checkpoint(runner, tmp_path):
    result = invoke(runner, "infer", "-c", tmp_path / "missing.ckpt", "-d", tmp_path / "dataset.jsonl")
    assert result.exit_code == 3
    assert "Checkpoint not found" in result.output


def test_eval_of_ground_truth(runner, trained, tmp_path):
    data, _ = trained
    result = invoke(runner, "eval", "-d", data / "dataset.jsonl", "-r", data / "dataset.jsonl", "-o", tmp_path)
    assert result.exit_code == 0, result.output

    report = json.loads((tmp_path / "report.json").read_text())
    assert report["pcp"] == 1.0
    assert report["mpjpe"] == 0.0
    assert report["missed"] == 0


def test_eval_without_matching_frames(runner, trained, tmp_path):
    data, _ = trained
    results = tmp_path / "results.jsonl"
    results.write_text('{"config_hash": "x", "result": {"frame_id": 999, "poses": []}}\n')
    result = invoke(runner, "eval", "-d", data / "dataset.jsonl", "-r", results)
    assert result.exit_code == 1
    assert "no result" in result.output


def test_train_infer_eval(runner, trained, tmp_path):
    data, checkpoint = trained
    results = tmp_path / "results.jsonl"

    result = invoke(runner, "infer", "-c", checkpoint, "-d", data / "dataset.jsonl", "-o", results)
    assert result.exit_code == 0, result.output
    fused = read_results(results)
    assert [r.frame_id for r in fused] == [f.frame_id for f in read_dataset(data / "dataset.jsonl")]

    result = invoke(runner, "eval", "-d", data / "dataset.jsonl", "-r", results, "-o", tmp_path / "report")
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "report" / "report.json").read_text())
    assert 0.0 <= report["pcp"] <= 1.0
    assert report["config_hash"] == json.loads(results.read_text().splitlines()[0])["config_hash"]
    assert (tmp_path / "report" / "recall.csv").is_file()


def test_infer_accepts_runtime_overrides(runner, trained, tmp_path):
    data, checkpoint = trained
    result = invoke(
        runner, "infer", "-c", checkpoint, "-d", data / "dataset.jsonl", "-o", tmp_path / "r.jsonl",
        "--set", "fusion_threshold=250",
    )
    assert result.exit_code == 0, result.output
    result = invoke(
        runner, "infer", "-c", checkpoint, "-d", data / "dataset.jsonl", "--set", "fusion_threshold=-5",
    )
    assert result.exit_code == 2


def foreign_checkpoints(tmp_path):
    garbage = tmp_path / "garbage.ckpt"
    garbage.write_bytes(b"\x00\x01 definitely not a checkpoint")
    bare = tmp_path / "bare.ckpt"
    save_checkpoint(bare, {"conv": Conv1d(1, 1, 3)}, "h", {"epoch": 1})
    return [garbage, bare]


def test_infer_with_unreadable_checkpoint(runner, trained, tmp_path):
    data, _ = trained
    for checkpoint in foreign_checkpoints(tmp_path):
        result = invoke(runner, "infer", "-c", checkpoint, "-d", data / "dataset.jsonl")
        assert result.exit_code == 1
        assert "Cannot load checkpoint" in result.output


def test_infer_with_malformed_rig(runner, trained, tmp_path):
    data, checkpoint = trained
    for body in (b"[5]", b"\xff\xfe not utf-8"):
        rig = tmp_path / "rig.json"
        rig.write_bytes(body)
        result = invoke(runner, "infer", "-c", checkpoint, "-d", data / "dataset.jsonl", "--rig", rig)
        assert result.exit_code == 2
        assert "Cannot load rig" in result.output


# -- bench and ablate ---------------------------------------------------------------


@pytest.mark.parametrize("persons", [0, 2])
def test_bench(runner, trained, tmp_path, persons):
    _, checkpoint = trained
    out = tmp_path / "bench.json"
    result = invoke(
        runner, "bench", "-c", checkpoint, "--persons", persons, "--frames", 2, "--rig", trained[0] / "rig.json", "-o", out
    )
    assert result.exit_code == 0, result.output
    body = json.loads(out.read_text())
    assert body["frames"] == 2
    assert set(body["stage_ms"]) == {"sweep", "person_net", "joint_net", "fusion"}
    assert body["config_hash"]
    if persons:
        assert body["scaling_ratio"] == pytest.approx(2.0)


def test_bench_without_checkpoint(runner, tmp_path):
    result = invoke(runner, "bench", "-c", tmp_path / "missing.ckpt")
    assert result.exit_code == 3


def test_bench_with_unreadable_checkpoint(runner, tmp_path):
    for checkpoint in foreign_checkpoints(tmp_path):
        result = invoke(runner, "bench", "-c", checkpoint, "--frames", 1)
        assert result.exit_code == 1
        assert "Cannot load checkpoint" in result.output


def test_ablate_planes(runner, tmp_path):
    result = invoke(
        runner, "ablate", "--planes", "8,16", "--train-frames", 2, "--test-frames", 1,
        "--set", "epochs=1", "--set", "num_cameras=3", *SMALL, "-o", tmp_path,
    )
    assert result.exit_code == 0, result.output
    curves = [
        (tmp_path / name / "recall.csv").read_text().splitlines()
        for name in ("planes_8", "planes_16")
    ]
    thresholds = [[line.split(",")[0] for line in lines[2:]] for lines in curves]
    assert thresholds[0] == thresholds[1]
    assert len(thresholds[0]) > 0
