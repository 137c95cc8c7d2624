"""Training, per-view inference and cross-view fusion.

Training builds (score matrix, relative score matrix, targets) samples from
synthetic frames, with the relative planes anchored at the true person
depth, and optimizes both networks jointly. Inference takes every camera as
the target view in turn, lifts each 2D pose to 3D, and fuses the per-view
estimates by single-linkage clustering on hip positions.
"""

import logging
import threading
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from src.core.config import RunConfig
from src.core.depthnets import DepthRegressor, absolute_joint_depths
from src.core.geometry import back_project_points
from src.core.storage import MetricsLog
from src.core.sweep import reference_views, sweep_view_scores
from src.core.synth import SKELETON, ground_truth_depths
from src.models import CameraRig, FusedPose, FusedResult, PoseEstimate, SceneFrame
from src.nn.optim import Adam
from src.nn.tensor import NonFiniteError


logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """A loss or gradient became non-finite; the last good state was restored."""

    def __init__(self, step: int, checkpoint: Optional[Path]) -> None:
        where = f", last good state saved to {checkpoint}" if checkpoint else ""
        super().__init__(f"training diverged at step {step}{where}")
        self.step = step
        self.checkpoint = checkpoint


def frame_rig(frame: SceneFrame, rig: Optional[CameraRig]) -> CameraRig:
    """The frame's own sampled rig if it has one, else the shared rig."""
    if frame.rig is not None:
        return frame.rig
    if rig is None:
        raise ValueError(f"frame {frame.frame_id} has no rig and none was given")
    return rig


# -- training -------------------------------------------------------------------


@dataclass
class TrainingSet:
    """Stacked samples: scores (N, D, J), relative scores (N, D_rel, J) and targets."""

    scores: np.ndarray
    rel_scores: np.ndarray
    person_depths: np.ndarray
    rel_depths: np.ndarray

    def __len__(self) -> int:
        return self.person_depths.shape[0]

    def subset(self, index: np.ndarray) -> "TrainingSet":
        return TrainingSet(
            self.scores[index], self.rel_scores[index], self.person_depths[index], self.rel_depths[index]
        )

    @classmethod
    def concatenate(cls, parts: Sequence["TrainingSet"], config: RunConfig, num_joints: int) -> "TrainingSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls(
                np.zeros((0, config.num_planes, num_joints)),
                np.zeros((0, config.num_rel_planes, num_joints)),
                np.zeros(0),
                np.zeros((0, num_joints)),
            )
        fields = ("scores", "rel_scores", "person_depths", "rel_depths")
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in fields))


def frame_samples(frame: SceneFrame, rig: Optional[CameraRig], config: RunConfig) -> TrainingSet:
    """Samples from every observed pose of every target view in one frame."""
    rig = frame_rig(frame, rig)
    sweep = config.sweep
    planes, rel = sweep.planes.depths, sweep.rel_planes.depths
    observations = [v.poses for v in frame.views]
    parts = []
    for target, view in enumerate(frame.views):
        kept = [(p, pid) for p, pid in zip(view.poses, view.person_ids) if p.valid.any()]
        if not kept:
            continue
        refs = reference_views(rig, observations, target)
        truth = ground_truth_depths(frame, target, rig)
        poses = [p for p, _ in kept]
        d_star = np.array([truth[pid][0] for _, pid in kept])
        rel_star = np.stack([truth[pid][1] for _, pid in kept])
        parts.append(TrainingSet(
            sweep_view_scores(poses, rig[target], refs, planes, sweep.sigma),
            sweep_view_scores(poses, rig[target], refs, d_star[:, None] + rel, sweep.sigma),
            d_star,
            rel_star,
        ))
    num_joints = frame.persons[0].num_joints if frame.persons else SKELETON.num_joints
    return TrainingSet.concatenate(parts, config, num_joints)


def build_training_set(
    frames: Sequence[SceneFrame], rig: Optional[CameraRig], config: RunConfig, threads: int = 1
) -> TrainingSet:
    if threads <= 1:
        parts = [frame_samples(f, rig, config) for f in frames]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda f: frame_samples(f, rig, config), frames))
    num_joints = frames[0].persons[0].num_joints if frames and frames[0].persons else SKELETON.num_joints
    return TrainingSet.concatenate(parts, config, num_joints)


@dataclass
class TrainingResult:
    regressor: DepthRegressor
    history: List[Dict[str, Optional[float]]] = field(default_factory=list)
    val_mae: Optional[float] = None
    checkpoint: Optional[Path] = None


def validation_mae(regressor: DepthRegressor, data: TrainingSet, batch_size: int = 256) -> float:
    """Mean absolute person-depth error (mm) with the networks in inference mode."""
    errors = []
    for start in range(0, len(data), batch_size):
        d_hat = regressor.predict_person_depths(data.scores[start:start + batch_size])
        errors.append(np.abs(d_hat - data.person_depths[start:start + batch_size]))
    return float(np.concatenate(errors).mean())


def split_frames(frames: Sequence[SceneFrame], val_fraction: float) -> Tuple[List[SceneFrame], List[SceneFrame]]:
    """Hold out the last `val_fraction` of the frames, keeping at least one for training."""
    n_val = min(int(round(len(frames) * val_fraction)), max(len(frames) - 1, 0))
    cut = len(frames) - n_val
    return list(frames[:cut]), list(frames[cut:])


def train(
    frames: Sequence[SceneFrame],
    rig: Optional[CameraRig],
    config: RunConfig,
    output_dir: Optional[Path] = None,
    threads: int = 1,
    on_epoch: Optional[Callable[[int, Dict[str, Optional[float]]], None]] = None,
) -> TrainingResult:
    """Jointly train both networks on `frames`.

    Writes metrics.csv, periodic epoch checkpoints and model.ckpt into
    `output_dir` when given. Raises TrainingDivergedError when a loss or
    gradient turns non-finite, after restoring the last good parameters.
    """
    if not frames:
        raise ValueError("dataset is empty")
    train_frames, val_frames = split_frames(frames, config.val_fraction)
    data = build_training_set(train_frames, rig, config, threads)
    val = build_training_set(val_frames, rig, config, threads) if val_frames else None
    if not len(data):
        raise ValueError("dataset holds no observed poses")
    num_joints = data.scores.shape[2]
    logger.info("Training on %d poses (%d held out)", len(data), len(val) if val else 0)

    regressor = DepthRegressor(config, num_joints)
    opt = config.optimizer
    optimizer = Adam(regressor.parameters(), opt.lr, opt.beta1, opt.beta2, opt.eps)
    rng = np.random.default_rng([config.seed, 1])
    config_hash = config.config_hash()

    metrics = None
    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        metrics = MetricsLog(output_dir / "metrics.csv", config_hash)

    result = TrainingResult(regressor)
    last_good = regressor.state_arrays()
    step = 0
    for epoch in range(1, opt.epochs + 1):
        order = rng.permutation(len(data))
        batches = [order[i:i + opt.batch_size] for i in range(0, len(order), opt.batch_size)]
        epoch_lp = epoch_lj = 0.0
        for b, index in enumerate(batches):
            step += 1
            batch = data.subset(index)
            try:
                regressor.train()
                total, lp, lj = regressor.losses(
                    batch.scores, batch.rel_scores, batch.person_depths, batch.rel_depths
                )
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
            except NonFiniteError as e:
                regressor.load_state_arrays(last_good)
                path = None
                if output_dir is not None:
                    path = output_dir / "last_good.ckpt"
                    regressor.save(path, {"epoch": epoch - 1, "step": step})
                logger.error("Non-finite values at step %d: %s", step, e)
                raise TrainingDivergedError(step, path) from e

            n = len(index)
            row: Dict[str, Optional[float]] = {
                "step": step, "loss_pose": lp.item() / n, "loss_joint": lj.item() / n, "val_mae": None
            }
            epoch_lp += lp.item()
            epoch_lj += lj.item()
            if b == len(batches) - 1 and val is not None and len(val):
                row["val_mae"] = validation_mae(regressor, val)
            result.history.append(row)
            if metrics is not None:
                metrics.append(step, row["loss_pose"], row["loss_joint"], row["val_mae"])

        last_good = regressor.state_arrays()
        summary = {
            "epoch": epoch,
            "loss_pose": epoch_lp / len(data),
            "loss_joint": epoch_lj / len(data),
            "val_mae": result.history[-1]["val_mae"],
        }
        result.val_mae = summary["val_mae"]
        logger.info(
            "epoch %d: L_pose %.2f mm, L_joint %.2f mm, val MAE %s",
            epoch,
            summary["loss_pose"],
            summary["loss_joint"],
            "n/a" if summary["val_mae"] is None else f"{summary['val_mae']:.2f} mm",
        )
        if output_dir is not None and epoch % opt.checkpoint_every == 0:
            regressor.save(output_dir / f"epoch_{epoch:03d}.ckpt", {"epoch": epoch, "step": step})
        if on_epoch is not None:
            on_epoch(epoch, summary)

    if output_dir is not None:
        result.checkpoint = output_dir / "model.ckpt"
        regressor.save(result.checkpoint, {"epoch": opt.epochs, "step": step})
    return result


# -- inference --------------------------------------------------------------------


class StageTimer:
    """Accumulated wall time per named stage."""

    def __init__(self) -> None:
        self.totals: Dict[str, float] = defaultdict(float)
        self._lock = threading.Lock()

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            with self._lock:
                self.totals[name] += elapsed


@contextmanager
def _timed(timer: Optional[StageTimer], name: str) -> Iterator[None]:
    if timer is None:
        yield
    else:
        with timer.stage(name):
            yield


def infer_view(
    frame: SceneFrame,
    rig: Optional[CameraRig],
    target: int,
    regressor: DepthRegressor,
    timer: Optional[StageTimer] = None,
) -> List[PoseEstimate]:
    """Lift every 2D pose of the target view to a world-frame 3D pose.

    A view without poses yields an empty list. Joints whose absolute depth
    is not positive are marked invalid.
    """
    poses = frame.views[target].poses
    if not poses:
        return []
    rig = frame_rig(frame, rig)
    camera = rig[target]
    sweep = regressor.config.sweep
    refs = reference_views(rig, [v.poses for v in frame.views], target)

    with _timed(timer, "sweep"):
        scores = sweep_view_scores(poses, camera, refs, regressor.planes.depths, sweep.sigma)
    with _timed(timer, "person_net"):
        d_hat = regressor.predict_person_depths(scores)
    with _timed(timer, "sweep"):
        rel_scores = sweep_view_scores(
            poses, camera, refs, d_hat[:, None] + regressor.rel_planes.depths, sweep.sigma
        )
    with _timed(timer, "joint_net"):
        depths = absolute_joint_depths(d_hat, regressor.predict_relative_depths(rel_scores))
        estimates = []
        for i, (pose, d, z) in enumerate(zip(poses, d_hat, depths)):
            estimates.append(PoseEstimate(
                joints=back_project_points(camera, pose.joints, z),
                valid=pose.valid & (z > 0.0),
                person_depth=float(d),
                confidence=pose.mean_confidence,
                view=target,
                pose_index=i,
            ))
    logger.debug("view %d: %d poses lifted", target, len(estimates))
    return estimates


def pose_anchor(joints: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Hip (root) position, or the centroid of valid joints when the hip is unobserved."""
    if valid[0] or not valid.any():
        return joints[0]
    return joints[valid].mean(axis=0)


def single_linkage_labels(points: np.ndarray, threshold: float) -> np.ndarray:
    """Cluster labels 0..K-1 (numbered by first appearance); points closer than or at `threshold` chain together."""
    n = points.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    if n == 1:
        return np.zeros(1, dtype=int)
    raw = fcluster(linkage(points, method="single"), t=threshold, criterion="distance")
    first: Dict[int, int] = {}
    return np.array([first.setdefault(label, len(first)) for label in raw])


def _merge(members: Sequence[PoseEstimate]) -> FusedPose:
    joints = np.stack([m.joints for m in members])
    valid = np.stack([m.valid for m in members])
    count = valid.sum(axis=0)
    seen = (joints * valid[..., None]).sum(axis=0) / np.maximum(count, 1)[:, None]
    fused = np.where((count > 0)[:, None], seen, joints.mean(axis=0))
    return FusedPose(
        joints=fused,
        valid=count > 0,
        confidence=float(np.mean([m.confidence for m in members])),
        provenance=[m.provenance for m in members],
    )


def fuse_views(
    estimates: Sequence[PoseEstimate], threshold: float, frame_id: int = 0
) -> FusedResult:
    """Single-linkage clustering of per-view estimates by hip distance, then joint-wise averaging.

    Clusters whose fused hips still lie within `threshold` of each other are
    merged again until no such pair remains.
    """
    if not threshold > 0.0:
        raise ValueError(f"fusion threshold must be positive, got {threshold}")
    ordered = sorted(estimates, key=lambda e: e.provenance)
    if not ordered:
        return FusedResult(frame_id=frame_id)

    labels = single_linkage_labels(np.stack([pose_anchor(e.joints, e.valid) for e in ordered]), threshold)
    groups = [[ordered[i] for i in np.flatnonzero(labels == k)] for k in range(labels.max() + 1)]
    while True:
        fused = [_merge(g) for g in groups]
        relabel = single_linkage_labels(np.stack([pose_anchor(f.joints, f.valid) for f in fused]), threshold)
        if relabel.max() + 1 == len(groups):
            break
        logger.debug("merging %d fused poses within %.0f mm", len(groups) - relabel.max() - 1, threshold)
        groups = [
            sorted((e for g, k in zip(groups, relabel) if k == label for e in g), key=lambda e: e.provenance)
            for label in range(relabel.max() + 1)
        ]
    return FusedResult(frame_id=frame_id, poses=fused, estimates=ordered)


def infer_frame(
    frame: SceneFrame,
    rig: Optional[CameraRig],
    regressor: DepthRegressor,
    timer: Optional[StageTimer] = None,
) -> FusedResult:
    estimates: List[PoseEstimate] = []
    for target in range(len(frame.views)):
        estimates.extend(infer_view(frame, rig, target, regressor, timer))
    with _timed(timer, "fusion"):
        return fuse_views(estimates, regressor.config.fusion_threshold, frame.frame_id)


def run_inference(
    frames: Sequence[SceneFrame],
    rig: Optional[CameraRig],
    regressor: DepthRegressor,
    threads: int = 1,
    timer: Optional[StageTimer] = None,
) -> Iterator[FusedResult]:
    """Fused results for every frame, in input order."""
    regressor.eval()
    if threads <= 1:
        for frame in frames:
            yield infer_frame(frame, rig, regressor, timer)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(lambda f: infer_frame(f, rig, regressor, timer), frames)
