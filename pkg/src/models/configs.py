"""Typed hyperparameter groups assembled from the flat run configuration."""

from enum import Enum
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.camera import DepthPlaneSet


class ArgmaxMode(str, Enum):
    """Person-level depth readout."""
    LOCAL = "local"
    STANDARD = "standard"


class _Config(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SweepConfig(_Config):
    """Plane-sweep scoring parameters."""

    sigma: float = Field(default=10.0, gt=0.0, description="Width of the score bell curve (px)")
    num_planes: int = Field(default=64, ge=2)
    depth_min: float = Field(default=500.0, gt=0.0)
    depth_max: float = Field(default=14000.0, gt=0.0)
    num_rel_planes: int = Field(default=64, ge=2)
    rel_min: float = Field(default=-1000.0, lt=0.0)
    rel_max: float = Field(default=1000.0, gt=0.0)

    @model_validator(mode="after")
    def _check_range(self) -> "SweepConfig":
        if not self.depth_min < self.depth_max:
            raise ValueError("depth_min must be below depth_max")
        return self

    @property
    def planes(self) -> DepthPlaneSet:
        return DepthPlaneSet(d_min=self.depth_min, d_max=self.depth_max, count=self.num_planes)

    @property
    def rel_planes(self) -> DepthPlaneSet:
        return DepthPlaneSet(d_min=self.rel_min, d_max=self.rel_max, count=self.num_rel_planes)


class PersonNetConfig(_Config):
    """Person-level 1D-CNN shape and readout."""

    hidden: int = Field(default=64, ge=1)
    blocks: int = Field(default=2, ge=0)
    kernel: int = Field(default=3, ge=1)
    window: int = Field(default=16, ge=1, description="Local soft-argmax window size")
    argmax: ArgmaxMode = ArgmaxMode.LOCAL

    @model_validator(mode="after")
    def _check_kernel(self) -> "PersonNetConfig":
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        return self


class JointNetConfig(_Config):
    """Joint-level dilated 1D-CNN shape."""

    hidden: int = Field(default=64, ge=1)
    dilations: Tuple[int, ...] = (1, 2, 4, 8)
    kernel: int = Field(default=3, ge=1)

    @model_validator(mode="after")
    def _check_kernel(self) -> "JointNetConfig":
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if any(d < 1 for d in self.dilations):
            raise ValueError("dilations must be positive")
        return self

    @property
    def receptive_field(self) -> int:
        """Receptive field of stem plus dilated blocks along the depth axis."""
        half = self.kernel // 2
        return 1 + 2 * half + sum(2 * half * d for d in self.dilations)


class PerturbationConfig(_Config):
    """2D observation noise model."""

    jitter_std: float = Field(default=3.0, ge=0.0, description="Gaussian jitter std (px)")
    drop_prob: float = Field(default=0.05, ge=0.0, lt=1.0)

    @property
    def confidence_sigma(self) -> float:
        return 2.0 * self.jitter_std


class SceneConfig(_Config):
    """Bounded capture space and person placement."""

    space_x: float = Field(default=8000.0, gt=0.0)
    space_y: float = Field(default=8000.0, gt=0.0)
    root_z_min: float = 850.0
    root_z_max: float = 1100.0
    min_persons: int = Field(default=1, ge=1)
    max_persons: int = Field(default=5, ge=1)
    min_person_distance: float = Field(default=500.0, ge=0.0)
    max_reach: float = Field(default=1000.0, gt=0.0)

    @model_validator(mode="after")
    def _check_counts(self) -> "SceneConfig":
        if self.min_persons > self.max_persons:
            raise ValueError("min_persons must not exceed max_persons")
        if self.root_z_min > self.root_z_max:
            raise ValueError("root_z_min must not exceed root_z_max")
        return self

    @property
    def bounds(self) -> Tuple[Tuple[float, float], ...]:
        return (
            (-self.space_x / 2, self.space_x / 2),
            (-self.space_y / 2, self.space_y / 2),
            (self.root_z_min, self.root_z_max),
        )


class OptimizerConfig(_Config):
    """Adam and training-loop settings."""

    lr: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=10, ge=1)
    joint_loss_weight: float = Field(default=1.0, ge=0.0)
    val_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    checkpoint_every: int = Field(default=1, ge=1)
