"""Inference timing per stage, the sweep cost scaling check and ablation runs."""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.config import RunConfig
from src.core.depthnets import DepthRegressor
from src.core.evaluation import Evaluator
from src.core.pipeline import StageTimer, frame_rig, run_inference, train
from src.core.storage import save_report
from src.core.sweep import counter, reference_views, sweep_view_scores
from src.core.synth import default_rig, generate_frames, generate_scene, render_frame
from src.models import ArgmaxMode, CameraRig, EvalReport, SceneFrame


logger = logging.getLogger(__name__)

STAGES = ("sweep", "person_net", "joint_net", "fusion")


@dataclass
class BenchReport:
    """Per-frame timings (ms) and sweep operation counts."""

    frames: int
    poses: int
    stage_ms: Dict[str, float] = field(default_factory=dict)
    total_ms: float = 0.0
    op_counts: Dict[str, int] = field(default_factory=dict)
    scaling_ratio: Optional[float] = None

    @property
    def fps(self) -> float:
        return 1000.0 / self.total_ms if self.total_ms > 0 else float("inf")

    def to_dict(self) -> Dict[str, object]:
        return {
            "frames": self.frames,
            "poses": self.poses,
            "stage_ms": dict(self.stage_ms),
            "total_ms": self.total_ms,
            "fps": self.fps,
            "op_counts": dict(self.op_counts),
            "scaling_ratio": self.scaling_ratio,
        }


def bench_frames(
    config: RunConfig, rig: CameraRig, persons: int = 4, count: int = 10, seed: int = 0
) -> List[SceneFrame]:
    """Frames with exactly `persons` people each, rendered through `rig`."""
    rng = np.random.default_rng([seed, persons])
    return [
        render_frame(generate_scene(rng, config.scene, num_persons=persons), rig, config.perturbation, rng, i)
        for i in range(count)
    ]


def sweep_operations(frames: Sequence[SceneFrame], rig: Optional[CameraRig], config: RunConfig) -> int:
    """Score evaluations of the person-level sweep over every target pose of `frames`."""
    counter.reset()
    planes = config.sweep.planes.depths
    for frame in frames:
        cameras = frame_rig(frame, rig)
        observations = [v.poses for v in frame.views]
        for target, view in enumerate(frame.views):
            refs = reference_views(cameras, observations, target)
            if view.poses:
                sweep_view_scores(view.poses, cameras[target], refs, planes, config.sigma)
    return counter["score_evaluations"]


def scaling_ratio(
    frames: Sequence[SceneFrame], rig: Optional[CameraRig], config: RunConfig, factor: int = 2
) -> float:
    """Ratio of sweep work with `factor` times the planes to the work at the configured count."""
    base = sweep_operations(frames, rig, config)
    scaled = sweep_operations(frames, rig, config.with_overrides({"num_planes": config.num_planes * factor}))
    return scaled / base if base else float("nan")


def run_bench(
    frames: Sequence[SceneFrame], rig: Optional[CameraRig], regressor: DepthRegressor
) -> BenchReport:
    """Single-threaded inference over `frames`, timed per stage; 2D detection is not part of it."""
    timer = StageTimer()
    counter.reset()
    start = time.perf_counter()
    for _ in run_inference(frames, rig, regressor, threads=1, timer=timer):
        pass
    elapsed = time.perf_counter() - start
    n = max(len(frames), 1)
    report = BenchReport(
        frames=len(frames),
        poses=sum(len(v.poses) for f in frames for v in f.views),
        stage_ms={s: 1000.0 * timer.totals.get(s, 0.0) / n for s in STAGES},
        total_ms=1000.0 * elapsed / n,
        op_counts=counter.snapshot(),
    )
    report.scaling_ratio = scaling_ratio(frames, rig, regressor.config)
    logger.info("bench: %.2f ms per frame over %d frames", report.total_ms, report.frames)
    return report


# -- ablations --------------------------------------------------------------------


Variant = Tuple[str, Dict[str, Any]]


def ablation_variants(
    planes: Sequence[int] = (),
    rel_planes: Sequence[int] = (),
    cameras: Sequence[int] = (),
    argmax: bool = False,
    random_viewpoints: bool = False,
) -> List[Variant]:
    """Named config overrides, one axis at a time; a single baseline when no axis is given."""
    variants: List[Variant] = []
    variants += [(f"planes={d}", {"num_planes": d}) for d in planes]
    variants += [(f"rel_planes={d}", {"num_rel_planes": d}) for d in rel_planes]
    variants += [(f"cameras={c}", {"num_cameras": c}) for c in cameras]
    if argmax:
        variants += [(f"argmax={m.value}", {"argmax": m}) for m in ArgmaxMode]
    if random_viewpoints:
        variants += [("viewpoints=fixed", {"random_viewpoints": False}), ("viewpoints=random", {"random_viewpoints": True})]
    return variants or [("baseline", {})]


def run_variant(
    config: RunConfig,
    train_frames: int,
    test_frames: int,
    output_dir: Path,
    threads: int = 1,
) -> EvalReport:
    """Train on frames 0..N-1 and evaluate on the following `test_frames` frames.

    Test frames are always rendered through the fixed evenly spaced rig, so a
    model trained on random viewpoints is scored on cameras it never saw.
    """
    rig = default_rig(config.num_cameras)
    training = list(generate_frames(config, rig, count=train_frames, start=0, threads=threads))
    result = train(training, rig, config, output_dir, threads)
    test_config = config.with_overrides({"random_viewpoints": False})
    testing = list(generate_frames(test_config, rig, count=test_frames, start=train_frames, threads=threads))
    evaluator = Evaluator(rig)
    for frame, fused in zip(testing, run_inference(testing, rig, result.regressor, threads)):
        evaluator.add(frame, fused)
    report = evaluator.report()
    save_report(report, output_dir, config.config_hash())
    return report
