"""2D/3D pose types and the matrices the depth regression consumes and produces."""

from typing import Any, Dict, Optional

import numpy as np
from pydantic import model_validator

from src.models.base import DomainModel, as_array
from src.models.camera import DepthPlaneSet, Point2D


class Pose2D(DomainModel):
    """J image-plane joints with per-joint confidence and validity."""

    joints: np.ndarray
    confidences: np.ndarray
    valid: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        joints = as_array(data["joints"], (None, 2), name="joints")
        n = joints.shape[0]
        conf = data.get("confidences")
        valid = data.get("valid")
        conf = as_array(np.ones(n) if conf is None else conf, (n,), name="confidences")
        valid = as_array(
            np.ones(n, dtype=bool) if valid is None else valid, (n,), dtype=bool, name="valid"
        )
        if np.any(conf < 0.0) or np.any(conf > 1.0):
            raise ValueError("confidences must lie in [0, 1]")
        return {"joints": joints, "confidences": conf, "valid": valid}

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]

    def joint(self, j: int) -> Point2D:
        return Point2D(float(self.joints[j, 0]), float(self.joints[j, 1]))

    @property
    def mean_confidence(self) -> float:
        """Mean confidence over valid joints, 0 when none is valid."""
        if not self.valid.any():
            return 0.0
        return float(self.confidences[self.valid].mean())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "joints": self.joints.tolist(),
            "confidences": self.confidences.tolist(),
            "valid": self.valid.tolist(),
        }


class Pose3D(DomainModel):
    """J world-frame joints in millimetres."""

    joints: np.ndarray
    person_id: Optional[int] = None

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            data["joints"] = as_array(data["joints"], (None, 3), name="joints")
        return data

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]

    @property
    def root(self) -> np.ndarray:
        return self.joints[0]

    def to_dict(self) -> Dict[str, Any]:
        return {"person_id": self.person_id, "joints": self.joints.tolist()}


class ScoreMatrix(DomainModel):
    """D x J cross-view consistency scores for one target pose."""

    values: np.ndarray
    planes: DepthPlaneSet

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            data["values"] = as_array(data["values"], (None, None), name="score values")
        return data

    @model_validator(mode="after")
    def _check(self) -> "ScoreMatrix":
        if self.values.shape[0] != self.planes.count:
            raise ValueError(
                f"score matrix has {self.values.shape[0]} rows for {self.planes.count} planes"
            )
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        return self

    @property
    def shape(self) -> tuple:
        return self.values.shape


class DepthDistribution(DomainModel):
    """Per-plane probabilities: a vector (person level) or a D_rel x J matrix."""

    probs: np.ndarray
    planes: DepthPlaneSet

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            data["probs"] = as_array(data["probs"], name="probabilities")
        return data

    @model_validator(mode="after")
    def _check(self) -> "DepthDistribution":
        if self.probs.ndim not in (1, 2) or self.probs.shape[0] != self.planes.count:
            raise ValueError(f"probabilities of shape {self.probs.shape} do not match planes")
        if np.any(self.probs < 0.0):
            raise ValueError("probabilities must be nonnegative")
        if not np.allclose(self.probs.sum(axis=0), 1.0, rtol=0.0, atol=1e-9):
            raise ValueError("probabilities must sum to 1 along the depth axis")
        return self
