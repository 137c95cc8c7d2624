#!/usr/bin/env python
"""Full-scale synthetic acceptance runs: accuracy, ablation shapes and speed.

These train real models and take a long time on a CPU. They are deselected by
default; run them with `pytest -m slow`.
"""

import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.core.bench import bench_frames, run_bench, run_variant
from src.core.config import RunConfig
from src.core.depthnets import DepthRegressor
from src.core.synth import default_rig

pytestmark = pytest.mark.slow

TRAIN_FRAMES = 2000
TEST_FRAMES = 200


def base_config(**overrides):
    return RunConfig(min_persons=1, max_persons=4, num_cameras=5, seed=11, **overrides)


def variant(tmp_path_factory, name, **overrides):
    return run_variant(base_config(**overrides), TRAIN_FRAMES, TEST_FRAMES, tmp_path_factory.mktemp(name))


@pytest.fixture(scope="module")
def baseline(tmp_path_factory):
    return variant(tmp_path_factory, "baseline")


def test_end_to_end_accuracy(tmp_path_factory):
    report = run_variant(base_config(), 10_000, 1_000, tmp_path_factory.mktemp("full"))
    assert report.pcp >= 0.95
    assert report.median_mpjpe <= 60.0
    assert report.recall_at(500.0) >= 0.99


def test_more_planes_dominate_recall(tmp_path_factory, baseline):
    coarse = dict(variant(tmp_path_factory, "planes16", num_planes=16).recall_curve)
    for threshold, recall in baseline.recall_curve:
        if threshold >= 100.0:
            assert recall >= coarse[threshold]


def test_fewer_relative_planes_lower_pcp(tmp_path_factory, baseline):
    coarse = variant(tmp_path_factory, "rel16", num_rel_planes=16)
    assert baseline.pcp > coarse.pcp


def test_pcp_with_fewer_cameras(tmp_path_factory, baseline):
    scores = [baseline.pcp]
    for cameras in (4, 3, 2):
        scores.append(variant(tmp_path_factory, f"cameras{cameras}", num_cameras=cameras).pcp)
    assert all(a >= b for a, b in zip(scores, scores[1:]))
    assert scores[-1] >= 0.85


def test_random_viewpoints_generalize(tmp_path_factory, baseline):
    report = variant(tmp_path_factory, "random", random_viewpoints=True)
    assert abs(report.pcp - baseline.pcp) <= 0.01


def test_inference_speed():
    config = base_config()
    rig = default_rig(5)
    regressor = DepthRegressor(config, num_joints=15)
    report = run_bench(bench_frames(config, rig, persons=4, count=50), rig, regressor)
    assert report.total_ms <= 25.0
    assert report.scaling_ratio == pytest.approx(2.0, abs=0.02)
    assert np.isfinite(report.fps)
