#!/usr/bin/env python
"""Test per-stage inference timing, sweep cost scaling and ablation variants."""

import math
import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

import pytest

from src.core.bench import STAGES, ablation_variants, bench_frames, run_bench, scaling_ratio, sweep_operations
from src.core.config import RunConfig
from src.core.depthnets import DepthRegressor
from src.core.synth import default_rig
from src.models import ArgmaxMode

# four times the full-scale per-frame target
FRAME_CEILING_MS = 100.0


@pytest.fixture(scope="module")
def setup():
    config = RunConfig(seed=11)
    rig = default_rig(5)
    return config, rig, DepthRegressor(config, num_joints=15)


# -- timing -------------------------------------------------------------------------


def test_default_model_runs_within_frame_budget(setup):
    config, rig, regressor = setup
    run_bench(bench_frames(config, rig, persons=4, count=1, seed=1), rig, regressor)
    report = run_bench(bench_frames(config, rig, persons=4, count=3), rig, regressor)

    assert report.frames == 3
    assert report.poses > 0
    assert report.total_ms <= FRAME_CEILING_MS, report.to_dict()
    assert set(report.stage_ms) == set(STAGES)
    assert sum(report.stage_ms.values()) <= report.total_ms + 1e-6
    assert report.fps == pytest.approx(1000.0 / report.total_ms)


def test_bench_without_persons(setup):
    config, rig, regressor = setup
    report = run_bench(bench_frames(config, rig, persons=0, count=2), rig, regressor)
    assert report.poses == 0
    assert math.isnan(report.scaling_ratio)


# -- sweep cost ---------------------------------------------------------------------


def test_sweep_work_is_linear_in_planes(setup):
    config, rig, _ = setup
    frames = bench_frames(config, rig, persons=3, count=2)
    expected = 0
    for frame in frames:
        observed = [len(v.poses) for v in frame.views]
        for target, count in enumerate(observed):
            refs = sum(1 for v, n in enumerate(observed) if v != target and n)
            expected += count * refs * config.num_planes * 15
    assert expected > 0
    assert sweep_operations(frames, rig, config) == expected
    assert scaling_ratio(frames, rig, config) == pytest.approx(2.0)
    assert scaling_ratio(frames, rig, config, factor=3) == pytest.approx(3.0)


def test_bench_frames_hold_exact_counts(setup):
    config, rig, _ = setup
    frames = bench_frames(config, rig, persons=3, count=4)
    assert [f.frame_id for f in frames] == [0, 1, 2, 3]
    assert all(len(f.persons) == 3 for f in frames)


# -- ablations ----------------------------------------------------------------------


def test_ablation_variants_one_axis_at_a_time():
    variants = ablation_variants(planes=(16, 64), cameras=(3,), argmax=True)
    assert [name for name, _ in variants] == [
        "planes=16",
        "planes=64",
        "cameras=3",
        *[f"argmax={m.value}" for m in ArgmaxMode],
    ]
    assert all(len(overrides) == 1 for _, overrides in variants)
    assert ablation_variants() == [("baseline", {})]
