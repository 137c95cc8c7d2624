"""Per-view estimates, fused results and evaluation reports."""

import csv
import io
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import Field, model_validator

from src.models.base import DomainModel, as_array


def _coerce_joints(data: Dict[str, Any]) -> Dict[str, Any]:
    data = dict(data)
    joints = as_array(data["joints"], (None, 3), name="joints")
    valid = data.get("valid")
    data["joints"] = joints
    data["valid"] = as_array(
        np.ones(joints.shape[0], dtype=bool) if valid is None else valid,
        (joints.shape[0],),
        dtype=bool,
        name="valid",
    )
    return data


class PoseEstimate(DomainModel):
    """A 3D pose estimated from one target view.

    `valid` marks joints observed in the 2D pose; the others were lifted from
    placeholder pixels and carry no information.
    """

    joints: np.ndarray
    valid: np.ndarray
    person_depth: float
    confidence: float = Field(ge=0.0, le=1.0)
    view: int
    pose_index: int

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = _coerce_joints(data)
        return data

    @property
    def provenance(self) -> Tuple[int, int]:
        return (self.view, self.pose_index)


class FusedPose(DomainModel):
    """A cluster of per-view estimates averaged into one final pose."""

    joints: np.ndarray
    valid: np.ndarray
    confidence: float = Field(ge=0.0, le=1.0)
    provenance: List[Tuple[int, int]]

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = _coerce_joints(data)
        return data

    def to_dict(self) -> Dict[str, Any]:
        return {
            "joints": self.joints.tolist(),
            "valid": self.valid.tolist(),
            "confidence": self.confidence,
            "provenance": [list(p) for p in self.provenance],
        }


class FusedResult(DomainModel):
    """Final poses of one frame plus the per-view estimates they came from."""

    frame_id: int
    poses: List[FusedPose] = Field(default_factory=list)
    estimates: List[PoseEstimate] = Field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frame_id": self.frame_id,
            "poses": [p.to_dict() for p in self.poses],
            "estimates": [
                {
                    "view": e.view,
                    "pose_index": e.pose_index,
                    "person_depth": e.person_depth,
                    "confidence": e.confidence,
                    "joints": e.joints.tolist(),
                    "valid": e.valid.tolist(),
                }
                for e in self.estimates
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FusedResult":
        return cls(
            frame_id=data["frame_id"],
            poses=[
                FusedPose(
                    joints=p["joints"],
                    valid=p.get("valid"),
                    confidence=p["confidence"],
                    provenance=[tuple(x) for x in p["provenance"]],
                )
                for p in data["poses"]
            ],
            estimates=[PoseEstimate(**e) for e in data.get("estimates", [])],
        )


AP_THRESHOLDS = (25.0, 50.0, 100.0, 150.0)


class EvalReport(DomainModel):
    """Aggregate metrics over an evaluated set of frames."""

    pcp: float = Field(ge=0.0, le=1.0)
    per_actor_pcp: Dict[int, float] = Field(default_factory=dict)
    # None when no estimate was matched to a ground-truth person
    mpjpe: Optional[float] = Field(default=None, ge=0.0)
    median_mpjpe: Optional[float] = Field(default=None, ge=0.0)
    matched: int = 0
    missed: int = 0
    ap: Dict[float, float] = Field(default_factory=dict)
    recall_curve: List[Tuple[float, float]] = Field(default_factory=list)

    def recall_at(self, threshold: float) -> float:
        for thr, rec in self.recall_curve:
            if thr == threshold:
                return rec
        raise KeyError(f"no recall sample at {threshold} mm")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pcp": self.pcp,
            "per_actor_pcp": {str(k): v for k, v in sorted(self.per_actor_pcp.items())},
            "mpjpe": self.mpjpe,
            "median_mpjpe": self.median_mpjpe,
            "matched": self.matched,
            "missed": self.missed,
            "ap": {f"AP_{int(k)}": v for k, v in sorted(self.ap.items())},
            "recall_curve": [list(x) for x in self.recall_curve],
        }

    def to_csv(self) -> str:
        """Flat metric,value table."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value"])
        writer.writerow(["pcp", repr(self.pcp)])
        for actor, value in sorted(self.per_actor_pcp.items()):
            writer.writerow([f"pcp_actor_{actor}", repr(value)])
        for name in ("mpjpe", "median_mpjpe"):
            value = getattr(self, name)
            writer.writerow([name, "" if value is None else repr(value)])
        writer.writerow(["matched", self.matched])
        writer.writerow(["missed", self.missed])
        for thr, value in sorted(self.ap.items()):
            writer.writerow([f"AP_{int(thr)}", repr(value)])
        return buf.getvalue()

    def recall_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["threshold", "recall"])
        for thr, rec in self.recall_curve:
            writer.writerow([repr(thr), repr(rec)])
        return buf.getvalue()
