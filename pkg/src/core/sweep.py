"""Plane-sweep score aggregation across reference views.

For every virtual depth plane a target-view pose is back-projected (all
joints on the same plane) and warped into each reference view, the nearest
observed reference pose is found, and each joint is scored with a Gaussian
of its image distance to the matched joint. Reference views are fused by a
confidence-weighted average.
"""

import logging
import struct
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from src.core.geometry import warp_joints
from src.models import CameraParams, CameraRig, DepthPlaneSet, Pose2D, ScoreMatrix


logger = logging.getLogger(__name__)


class NoReferencePosesError(ValueError):
    """A reference view offered no candidate poses."""

    def __init__(self) -> None:
        super().__init__("no reference poses")


class OperationCounter:
    """Thread-safe tally of sweep work, used for scaling checks."""

    def __init__(self) -> None:
        self._counts: Counter = Counter()
        self._lock = threading.Lock()

    def add(self, key: str, amount: int) -> None:
        with self._lock:
            self._counts[key] += int(amount)

    def reset(self) -> None:
        with self._lock:
            self._counts.clear()

    def snapshot(self) -> Dict[str, int]:
        with self._lock:
            return dict(self._counts)

    def __getitem__(self, key: str) -> int:
        with self._lock:
            return self._counts[key]


# Global counter instance
counter = OperationCounter()


@dataclass(frozen=True)
class ReferenceView:
    """A reference camera with its candidate poses stacked into arrays."""

    camera: CameraParams
    joints: np.ndarray  # (C, J, 2)
    confidences: np.ndarray  # (C, J)
    valid: np.ndarray  # (C, J)

    @classmethod
    def from_poses(cls, camera: CameraParams, poses: Sequence[Pose2D]) -> "ReferenceView":
        if not poses:
            return cls(camera, np.zeros((0, 0, 2)), np.zeros((0, 0)), np.zeros((0, 0), bool))
        return cls(
            camera,
            np.stack([p.joints for p in poses]),
            np.stack([p.confidences for p in poses]),
            np.stack([p.valid for p in poses]),
        )

    @property
    def num_candidates(self) -> int:
        return self.joints.shape[0]


RefViewsLike = Sequence[Union[ReferenceView, Tuple[CameraParams, Sequence[Pose2D]]]]


def _as_reference_views(ref_views: RefViewsLike) -> List[ReferenceView]:
    return [
        v if isinstance(v, ReferenceView) else ReferenceView.from_poses(v[0], v[1])
        for v in ref_views
    ]


def reference_views(
    rig: CameraRig, observations: Sequence[Sequence[Pose2D]], target: int
) -> List[ReferenceView]:
    """Reference views for `target`: every other camera with its observed poses."""
    return [
        ReferenceView.from_poses(cam, poses)
        for v, (cam, poses) in enumerate(zip(rig, observations))
        if v != target
    ]


def joint_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean image distance between two joints (pixels)."""
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def pose_distance(warped: Pose2D, candidate: Pose2D) -> float:
    """Mean joint distance over joints valid in both poses; inf if none is."""
    mask = warped.valid & candidate.valid
    if not mask.any():
        return float("inf")
    d = np.hypot(*(warped.joints[mask] - candidate.joints[mask]).T)
    return float(d.sum() / mask.sum())


def nearest_reference_pose(warped: Pose2D, candidates: Sequence[Pose2D]) -> Tuple[int, Pose2D]:
    """Candidate with the smallest mean valid-joint distance; ties go to the lowest index."""
    if not candidates:
        raise NoReferencePosesError()
    distances = [pose_distance(warped, c) for c in candidates]
    index = int(np.argmin(distances))
    return index, candidates[index]


def _view_scores(
    target_cam: CameraParams,
    joints: np.ndarray,
    valid: np.ndarray,
    view: ReferenceView,
    depths: np.ndarray,
    sigma: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-plane scores and fusion weights, each (T, P, J), for one reference view.

    joints (T, J, 2) and valid (T, J) hold T target poses; depths is (P,)
    shared by all of them or (T, P) per pose.
    """
    T, J = joints.shape[:2]
    P = depths.shape[-1]
    if view.num_candidates == 0:
        return np.zeros((T, P, J)), np.zeros((T, P, J))

    warped, in_front = warp_joints(target_cam, view.camera, joints, depths)
    warped_valid = in_front & valid[:, None, :]  # (T, P, J)

    diff = warped[:, :, None] - view.joints[None, None]  # (T, P, C, J, 2)
    dist = np.hypot(diff[..., 0], diff[..., 1])
    mutual = warped_valid[:, :, None, :] & view.valid[None, None]
    count = mutual.sum(axis=3)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, np.where(mutual, dist, 0.0).sum(axis=3) / count, np.inf)

    best = np.argmin(mean, axis=2)  # first minimum: lowest index on ties
    matched = np.isfinite(np.take_along_axis(mean, best[..., None], axis=2)[..., 0])
    tau = np.take_along_axis(dist, best[..., None, None], axis=2)[:, :, 0]  # (T, P, J)
    cand_valid = view.valid[best]
    scores = np.where(warped_valid & cand_valid, np.exp(-(tau ** 2) / (2.0 * sigma ** 2)), 0.0)
    weights = np.where(cand_valid & matched[..., None], view.confidences[best], 0.0)

    counter.add("score_evaluations", T * P * J)
    counter.add("pose_comparisons", T * P * view.num_candidates)
    return scores, weights


def sweep_view_scores(
    target_poses: Sequence[Pose2D],
    target_cam: CameraParams,
    ref_views: RefViewsLike,
    depths: np.ndarray,
    sigma: float,
) -> np.ndarray:
    """Fused (T, P, J) scores for every pose of one target view at once.

    `depths` is (P,) for planes shared by all poses or (T, P) for per-pose
    planes such as the relative sweep around each anchor depth.
    """
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    depths = np.asarray(depths, dtype=np.float64)
    if not target_poses:
        return np.zeros((0, depths.shape[-1], 0))
    joints = np.stack([p.joints for p in target_poses])
    valid = np.stack([p.valid for p in target_poses])
    num = np.zeros((len(target_poses), depths.shape[-1], joints.shape[1]))
    den = np.zeros_like(num)
    for view in _as_reference_views(ref_views):
        scores, weights = _view_scores(target_cam, joints, valid, view, depths, sigma)
        num += weights * scores
        den += weights
    with np.errstate(invalid="ignore", divide="ignore"):
        fused = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)
    return np.clip(fused, 0.0, 1.0)


def sweep_scores(
    target_pose: Pose2D,
    target_cam: CameraParams,
    ref_views: RefViewsLike,
    depths: np.ndarray,
    sigma: float,
) -> np.ndarray:
    """Fused (P, J) scores at arbitrary absolute depths (non-positive depths score 0)."""
    return sweep_view_scores([target_pose], target_cam, ref_views, depths, sigma)[0]


def score_matrix(
    target_pose: Pose2D,
    target_cam: CameraParams,
    ref_views: RefViewsLike,
    planes: DepthPlaneSet,
    sigma: float,
) -> ScoreMatrix:
    """Person-level D x J score matrix over the absolute depth planes."""
    values = sweep_scores(target_pose, target_cam, ref_views, planes.depths, sigma)
    return ScoreMatrix(values=values, planes=planes)


def relative_score_matrix(
    target_pose: Pose2D,
    anchor_depth: float,
    target_cam: CameraParams,
    ref_views: RefViewsLike,
    rel_planes: DepthPlaneSet,
    sigma: float,
) -> ScoreMatrix:
    """Joint-level D_rel x J scores at depths anchor + d_rel.

    Planes at or behind the target camera score zero.
    """
    depths = anchor_depth + rel_planes.depths
    if np.any(depths <= 0.0):
        logger.debug(
            "anchor %.1f mm puts %d relative planes behind the camera",
            anchor_depth,
            int((depths <= 0.0).sum()),
        )
    values = sweep_scores(target_pose, target_cam, ref_views, depths, sigma)
    return ScoreMatrix(values=values, planes=rel_planes)


_HEADER = struct.Struct("<ii")


def dump_scores(matrix: Union[ScoreMatrix, np.ndarray], path: Union[str, Path]) -> None:
    """Write scores as int32 D, J followed by row-major little-endian float64."""
    values = matrix.values if isinstance(matrix, ScoreMatrix) else np.asarray(matrix)
    D, J = values.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(D, J))
        f.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def load_scores(path: Union[str, Path]) -> np.ndarray:
    """Read a score dump written by `dump_scores`."""
    raw = Path(path).read_bytes()
    D, J = _HEADER.unpack_from(raw)
    payload = raw[_HEADER.size:]
    if len(payload) != 8 * D * J:
        raise ValueError(f"{path}: expected {D}x{J} float64 payload, got {len(payload)} bytes")
    return np.frombuffer(payload, dtype="<f8").reshape(D, J).copy()
