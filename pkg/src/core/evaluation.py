"""Pose metrics: PCP, MPJPE, average precision and person-depth recall."""

import logging
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.synth import SKELETON, ground_truth_depths
from src.models import AP_THRESHOLDS, CameraRig, EvalReport, FusedResult, SceneFrame


logger = logging.getLogger(__name__)

DEFAULT_RECALL_THRESHOLDS = (25.0, 50.0, 75.0, 100.0, 150.0, 200.0, 300.0, 400.0, 500.0, 750.0, 1000.0)

Parts = Sequence[Tuple[int, int]]
PoseArray = Union[np.ndarray, Sequence[np.ndarray]]


def _stack(poses: PoseArray) -> np.ndarray:
    if isinstance(poses, np.ndarray):
        return poses.reshape(-1, *poses.shape[-2:]) if poses.size else np.zeros((0, 0, 3))
    poses = [getattr(p, "joints", p) for p in poses]
    return np.stack(poses) if poses else np.zeros((0, 0, 3))


def joint_distances(estimates: PoseArray, ground_truth: PoseArray) -> np.ndarray:
    """(N, M) mean per-joint distance between every estimate and every GT pose."""
    est, gt = _stack(estimates), _stack(ground_truth)
    if not len(est) or not len(gt):
        return np.zeros((len(est), len(gt)))
    return np.linalg.norm(est[:, None] - gt[None], axis=-1).mean(axis=-1)


def correct_parts(estimate: np.ndarray, truth: np.ndarray, parts: Parts) -> np.ndarray:
    """Per part: mean endpoint error at most half the true part length."""
    a, b = np.array(parts).T
    err = (np.linalg.norm(estimate[a] - truth[a], axis=1) + np.linalg.norm(estimate[b] - truth[b], axis=1)) / 2
    return err <= 0.5 * np.linalg.norm(truth[a] - truth[b], axis=1)


def pcp(estimates: PoseArray, ground_truth: PoseArray, parts: Parts = SKELETON.pcp_parts) -> np.ndarray:
    """Fraction of correct parts for each GT pose, scored against its closest estimate.

    Closest means smallest mean joint distance; with no estimates every GT scores 0.
    """
    est, gt = _stack(estimates), _stack(ground_truth)
    if not len(gt):
        return np.zeros(0)
    if not len(est):
        return np.zeros(len(gt))
    nearest = joint_distances(est, gt).argmin(axis=0)
    return np.array([correct_parts(est[n], g, parts).mean() for n, g in zip(nearest, gt)])


def match_by_hip(estimates: PoseArray, ground_truth: PoseArray, max_distance: float = np.inf) -> np.ndarray:
    """Index of the estimate whose root is nearest each GT root; -1 beyond `max_distance`."""
    est, gt = _stack(estimates), _stack(ground_truth)
    if not len(gt):
        return np.zeros(0, dtype=int)
    if not len(est):
        return np.full(len(gt), -1)
    d = np.linalg.norm(est[:, None, 0] - gt[None, :, 0], axis=-1)
    nearest = d.argmin(axis=0)
    return np.where(d[nearest, np.arange(len(gt))] <= max_distance, nearest, -1)


def per_pose_errors(
    estimates: PoseArray, ground_truth: PoseArray, max_distance: float = np.inf
) -> Tuple[np.ndarray, int]:
    """Mean joint error of each matched GT pose, and the number of unmatched GT poses."""
    est, gt = _stack(estimates), _stack(ground_truth)
    match = match_by_hip(est, gt, max_distance)
    hit = match >= 0
    errors = np.array([np.linalg.norm(est[m] - g, axis=1).mean() for m, g in zip(match[hit], gt[hit])])
    return errors, int((~hit).sum())


def mpjpe(estimates: PoseArray, ground_truth: PoseArray, max_distance: float = np.inf) -> float:
    """Mean per-joint position error (mm) over matched pairs, without alignment; NaN when nothing matched."""
    errors, _ = per_pose_errors(estimates, ground_truth, max_distance)
    return float(errors.mean()) if errors.size else float("nan")


def match_detections(
    estimates: PoseArray, confidences: Sequence[float], ground_truth: PoseArray, threshold: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Greedy matching in descending confidence; returns sorted confidences and TP flags.

    Each estimate takes the closest still-unmatched GT pose and is a true
    positive when its MPJPE to it is within `threshold`.
    """
    if not threshold > 0.0:
        raise ValueError(f"AP threshold must be positive, got {threshold}")
    conf = np.asarray(confidences, dtype=np.float64)
    order = np.argsort(-conf, kind="stable")
    dist = joint_distances(estimates, ground_truth)
    taken = np.zeros(dist.shape[1], dtype=bool)
    tp = np.zeros(len(order), dtype=bool)
    for rank, i in enumerate(order):
        if taken.all():
            break
        d = np.where(taken, np.inf, dist[i])
        j = int(d.argmin())
        if d[j] <= threshold:
            taken[j] = True
            tp[rank] = True
    return conf[order], tp


def precision_recall_area(confidences: np.ndarray, tp: np.ndarray, num_gt: int) -> float:
    """All-points interpolated area under the precision-recall curve."""
    if num_gt == 0 or len(tp) == 0:
        return 0.0
    order = np.argsort(-np.asarray(confidences), kind="stable")
    hits = np.asarray(tp, dtype=np.float64)[order]
    tp_cum = np.cumsum(hits)
    fp_cum = np.cumsum(1.0 - hits)
    recall = np.concatenate([[0.0], tp_cum / num_gt, [1.0]])
    precision = np.concatenate([[0.0], tp_cum / (tp_cum + fp_cum), [0.0]])
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.flatnonzero(recall[1:] != recall[:-1])
    return float(np.sum((recall[steps + 1] - recall[steps]) * precision[steps + 1]))


def average_precision(
    estimates: PoseArray, confidences: Sequence[float], ground_truth: PoseArray, threshold: float
) -> float:
    conf, tp = match_detections(estimates, confidences, ground_truth, threshold)
    return precision_recall_area(conf, tp, len(_stack(ground_truth)))


def depth_errors(estimated: Sequence[float], true: Sequence[float]) -> np.ndarray:
    """For each true depth, the error of the nearest estimated depth (inf if none)."""
    est = np.asarray(estimated, dtype=np.float64)
    truth = np.asarray(true, dtype=np.float64)
    if not est.size:
        return np.full(truth.shape, np.inf)
    return np.abs(truth[:, None] - est[None, :]).min(axis=1)


def recall_curve(errors: np.ndarray, thresholds: Sequence[float]) -> List[Tuple[float, float]]:
    thresholds = [float(t) for t in thresholds]
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("recall thresholds must be ascending")
    if not len(errors):
        return [(t, 0.0) for t in thresholds]
    return [(t, float(np.mean(errors <= t))) for t in thresholds]


def depth_recall(
    estimated: Sequence[float], true: Sequence[float], thresholds: Sequence[float] = DEFAULT_RECALL_THRESHOLDS
) -> List[Tuple[float, float]]:
    """Fraction of true person depths whose nearest estimate errs by at most each threshold."""
    return recall_curve(depth_errors(estimated, true), thresholds)


class Evaluator:
    """Accumulates metrics over frames and produces an EvalReport.

    PCP is averaged per actor (person id) across frames and then over
    actors. AP pools detections of all frames. Depth recall uses the
    per-view estimates carried by each result, when present.
    """

    def __init__(
        self,
        rig: Optional[CameraRig] = None,
        parts: Parts = SKELETON.pcp_parts,
        ap_thresholds: Sequence[float] = AP_THRESHOLDS,
        recall_thresholds: Sequence[float] = DEFAULT_RECALL_THRESHOLDS,
        match_distance: float = 500.0,
    ) -> None:
        self.rig = rig
        self.parts = parts
        self.ap_thresholds = tuple(float(t) for t in ap_thresholds)
        self.recall_thresholds = tuple(float(t) for t in recall_thresholds)
        self.match_distance = match_distance
        self.correct: Dict[int, float] = defaultdict(float)
        self.total: Dict[int, int] = defaultdict(int)
        self.errors: List[np.ndarray] = []
        self.missed = 0
        self.num_gt = 0
        self.detections: Dict[float, List[Tuple[np.ndarray, np.ndarray]]] = defaultdict(list)
        self.depth_errors: List[np.ndarray] = []
        self.frames = 0

    def add(self, frame: SceneFrame, result: FusedResult) -> None:
        gt = _stack(frame.persons)
        est = _stack(result.poses)
        conf = [p.confidence for p in result.poses]
        self.frames += 1
        self.num_gt += len(gt)

        for person, score in zip(frame.persons, pcp(est, gt, self.parts)):
            self.correct[person.person_id] += score * len(self.parts)
            self.total[person.person_id] += len(self.parts)

        errors, missed = per_pose_errors(est, gt, self.match_distance)
        self.errors.append(errors)
        self.missed += missed

        for t in self.ap_thresholds:
            self.detections[t].append(match_detections(est, conf, gt, t))

        if result.estimates:
            for view in range(len(frame.views)):
                truth = ground_truth_depths(frame, view, self.rig)
                estimated = [e.person_depth for e in result.estimates if e.view == view]
                self.depth_errors.append(depth_errors(estimated, [d for d, _ in truth.values()]))

    def report(self) -> EvalReport:
        per_actor = {pid: self.correct[pid] / self.total[pid] for pid in sorted(self.total)}
        errors = np.concatenate(self.errors) if self.errors else np.zeros(0)
        ap = {}
        for t in self.ap_thresholds:
            parts = self.detections[t]
            conf = np.concatenate([c for c, _ in parts]) if parts else np.zeros(0)
            tp = np.concatenate([h for _, h in parts]) if parts else np.zeros(0, dtype=bool)
            ap[t] = precision_recall_area(conf, tp, self.num_gt)
        curve: List[Tuple[float, float]] = []
        if self.depth_errors:
            curve = recall_curve(np.concatenate(self.depth_errors), self.recall_thresholds)
        report = EvalReport(
            pcp=float(np.mean(list(per_actor.values()))) if per_actor else 0.0,
            per_actor_pcp=per_actor,
            mpjpe=float(errors.mean()) if errors.size else None,
            median_mpjpe=float(np.median(errors)) if errors.size else None,
            matched=int(errors.size),
            missed=self.missed,
            ap=ap,
            recall_curve=curve,
        )
        logger.info("Evaluated %d frames: PCP %.4f, MPJPE %s mm", self.frames, report.pcp, report.mpjpe)
        return report
