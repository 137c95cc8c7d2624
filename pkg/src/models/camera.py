"""Calibrated pinhole cameras, image/world points and virtual depth planes."""

from typing import Any, Dict, List, NamedTuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from src.models.base import DomainModel, as_array


ORTHONORMAL_TOLERANCE = 1e-9


class Point2D(NamedTuple):
    """Image coordinates in pixels."""

    u: float
    v: float


class Point3D(NamedTuple):
    """World coordinates in millimetres."""

    x: float
    y: float
    z: float


class CameraParams(DomainModel):
    """Intrinsics and world-to-camera extrinsics of one ideal pinhole camera."""

    name: str = "cam"
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int = Field(gt=0)
    height: int = Field(gt=0)

    @field_validator("K", "R", mode="before")
    @classmethod
    def _coerce_matrix(cls, v: Any) -> np.ndarray:
        arr = np.asarray(v, dtype=np.float64)
        if arr.shape == (9,):
            arr = arr.reshape(3, 3)
        return as_array(arr, (3, 3), name="camera matrix")

    @field_validator("t", mode="before")
    @classmethod
    def _coerce_translation(cls, v: Any) -> np.ndarray:
        return as_array(np.ravel(np.asarray(v, dtype=np.float64)), (3,), name="t")

    @field_validator("K")
    @classmethod
    def _check_intrinsics(cls, K: np.ndarray) -> np.ndarray:
        if K[1, 0] != 0.0 or K[2, 0] != 0.0 or K[2, 1] != 0.0:
            raise ValueError("K must be upper-triangular")
        if K[0, 0] <= 0.0 or K[1, 1] <= 0.0:
            raise ValueError("K must have strictly positive focal lengths")
        if K[2, 2] != 1.0:
            raise ValueError("K[2][2] must equal 1")
        return K

    @field_validator("R")
    @classmethod
    def _check_rotation(cls, R: np.ndarray) -> np.ndarray:
        if np.max(np.abs(R.T @ R - np.eye(3))) >= ORTHONORMAL_TOLERANCE:
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOLERANCE:
            raise ValueError("R must have determinant +1")
        return R

    @property
    def K_inv(self) -> np.ndarray:
        return np.linalg.inv(self.K)

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return -self.R.T @ self.t

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "K": self.K.ravel().tolist(),
            "R": self.R.ravel().tolist(),
            "t": self.t.tolist(),
            "width": self.width,
            "height": self.height,
        }


class DepthPlaneSet(DomainModel):
    """D equally spaced depth planes covering [d_min, d_max] inclusive.

    Used both for absolute person-level planes and for the relative planes
    around an anchor depth, so d_min may be negative.
    """

    d_min: float
    d_max: float
    count: int = Field(ge=2)

    @model_validator(mode="after")
    def _check_range(self) -> "DepthPlaneSet":
        if not self.d_min < self.d_max:
            raise ValueError(f"d_min ({self.d_min}) must be below d_max ({self.d_max})")
        return self

    @property
    def depths(self) -> np.ndarray:
        return np.linspace(self.d_min, self.d_max, self.count)

    @property
    def spacing(self) -> float:
        return (self.d_max - self.d_min) / (self.count - 1)

    def __len__(self) -> int:
        return self.count


CameraRig = List[CameraParams]
