"""Skeleton template and synthetic scene frames."""

from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import Field, model_validator

from src.models.base import DomainModel
from src.models.camera import CameraParams
from src.models.pose import Pose2D, Pose3D


class SkeletonTemplate(DomainModel):
    """Tree skeleton rooted at the pelvis (center hip)."""

    joint_names: Tuple[str, ...]
    parents: Tuple[int, ...]
    bone_lengths: Tuple[float, ...]
    pcp_parts: Tuple[Tuple[int, int], ...] = ()

    @model_validator(mode="after")
    def _check_tree(self) -> "SkeletonTemplate":
        n = len(self.joint_names)
        if len(self.parents) != n or len(self.bone_lengths) != n:
            raise ValueError("joint_names, parents and bone_lengths must have equal length")
        if self.parents[0] != -1 or any(p == -1 for p in self.parents[1:]):
            raise ValueError("joint 0 must be the single root")
        for j, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < j:
                raise ValueError(f"parent of joint {j} must precede it")
            if self.bone_lengths[j] <= 0.0:
                raise ValueError(f"bone ending at joint {j} must have positive length")
        return self

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def bones(self) -> List[Tuple[int, int]]:
        return [(p, j) for j, p in enumerate(self.parents) if p >= 0]

    def index(self, name: str) -> int:
        return self.joint_names.index(name)


class ViewObservation(DomainModel):
    """Observed 2D poses in one camera; person_ids trace each pose to its 3D person."""

    camera: str
    poses: List[Pose2D] = Field(default_factory=list)
    person_ids: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_ids(self) -> "ViewObservation":
        if len(self.poses) != len(self.person_ids):
            raise ValueError("every observed pose needs exactly one person id")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "camera": self.camera,
            "person_ids": list(self.person_ids),
            "poses": [p.to_dict() for p in self.poses],
        }


class SceneFrame(DomainModel):
    """One synthetic frame: 3D persons plus per-view 2D observations.

    `rig` is set only for frames rendered with their own sampled viewpoints.
    """

    frame_id: int
    persons: List[Pose3D]
    views: List[ViewObservation]
    rig: Optional[List[CameraParams]] = None

    def person(self, person_id: int) -> Pose3D:
        for p in self.persons:
            if p.person_id == person_id:
                return p
        raise KeyError(f"frame {self.frame_id} has no person {person_id}")

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "frame_id": self.frame_id,
            "persons": [p.to_dict() for p in self.persons],
            "views": [v.to_dict() for v in self.views],
        }
        if self.rig is not None:
            out["rig"] = [c.to_dict() for c in self.rig]
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SceneFrame":
        rig = data.get("rig")
        return cls(
            frame_id=data["frame_id"],
            persons=[Pose3D(**p) for p in data["persons"]],
            views=[
                ViewObservation(
                    camera=v["camera"],
                    person_ids=v["person_ids"],
                    poses=[Pose2D(**p) for p in v["poses"]],
                )
                for v in data["views"]
            ],
            rig=None if rig is None else [CameraParams(**c) for c in rig],
        )


def stack_joints(poses: List[Pose3D]) -> np.ndarray:
    """Stack pose joints into an (N, J, 3) array."""
    if not poses:
        return np.zeros((0, 0, 3))
    return np.stack([p.joints for p in poses])
