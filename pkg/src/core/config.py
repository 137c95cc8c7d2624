"""Configuration management for plane-sweep pose estimation."""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.models import (
    ArgmaxMode,
    JointNetConfig,
    OptimizerConfig,
    PersonNetConfig,
    PerturbationConfig,
    SceneConfig,
    SweepConfig,
)


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="PSP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    log_level: str = Field(default="INFO", description="Logging level")

    # Run configuration file used when --config is not given
    config: Optional[Path] = Field(default=None, description="Default run config path")

    # Paths
    data_dir: Path = Field(default=Path("data"), description="Default output directory")

    # Parallelism
    threads: int = Field(default=1, ge=1, description="Worker threads for frame-level work")


class RunConfig(BaseModel):
    """Every hyperparameter of a run, as one flat key-value document.

    The file format is `KEY=value` per line (parsed with python-dotenv); keys
    are case-insensitive and unknown keys are rejected.
    """

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    # Sweep
    sigma: float = Field(default=10.0, gt=0.0)
    num_planes: int = Field(default=64, ge=2)
    depth_min: float = Field(default=500.0, gt=0.0)
    depth_max: float = Field(default=14000.0, gt=0.0)
    num_rel_planes: int = Field(default=64, ge=2)
    rel_min: float = Field(default=-1000.0, lt=0.0)
    rel_max: float = Field(default=1000.0, gt=0.0)

    # Person-level network
    person_hidden: int = Field(default=64, ge=1)
    person_blocks: int = Field(default=2, ge=0)
    person_kernel: int = Field(default=3, ge=1)
    window: int = Field(default=0, ge=0, description="Local soft-argmax window; 0 means D/4")
    argmax: ArgmaxMode = ArgmaxMode.LOCAL

    # Joint-level network
    joint_hidden: int = Field(default=64, ge=1)
    joint_dilations: Tuple[int, ...] = (1, 2, 4, 8)
    joint_kernel: int = Field(default=3, ge=1)

    # Optimizer and training
    lr: float = Field(default=1e-3, gt=0.0)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = Field(default=1e-8, gt=0.0)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=10, ge=1)
    joint_loss_weight: float = Field(default=1.0, ge=0.0)
    val_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    checkpoint_every: int = Field(default=1, ge=1)
    bn_momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    bn_eps: float = Field(default=1e-5, gt=0.0)

    # Synthetic scenes
    frames: int = Field(default=100, ge=1)
    num_cameras: int = Field(default=5, ge=2)
    random_viewpoints: bool = False
    space_x: float = Field(default=8000.0, gt=0.0)
    space_y: float = Field(default=8000.0, gt=0.0)
    root_z_min: float = 850.0
    root_z_max: float = 1100.0
    min_persons: int = Field(default=1, ge=1)
    max_persons: int = Field(default=5, ge=1)
    min_person_distance: float = Field(default=500.0, ge=0.0)
    jitter_std: float = Field(default=3.0, ge=0.0)
    drop_prob: float = Field(default=0.05, ge=0.0, lt=1.0)

    # Pipeline
    fusion_threshold: float = Field(default=500.0, gt=0.0)
    seed: int = Field(default=0, ge=0)

    @field_validator("joint_dilations", mode="before")
    @classmethod
    def _parse_dilations(cls, v: Any) -> Any:
        if isinstance(v, str):
            return tuple(int(x) for x in v.replace(" ", "").split(",") if x)
        return v

    @model_validator(mode="after")
    def _check_groups(self) -> "RunConfig":
        # Building every group runs its own validation.
        _ = (self.sweep, self.person_net, self.joint_net, self.scene, self.optimizer)
        if self.window > self.num_planes:
            raise ValueError("window must not exceed num_planes")
        if self.joint_net.receptive_field < self.num_rel_planes / 2:
            raise ValueError(
                f"joint net receptive field {self.joint_net.receptive_field} "
                f"is below num_rel_planes/2"
            )
        return self

    @property
    def sweep(self) -> SweepConfig:
        return SweepConfig(
            sigma=self.sigma,
            num_planes=self.num_planes,
            depth_min=self.depth_min,
            depth_max=self.depth_max,
            num_rel_planes=self.num_rel_planes,
            rel_min=self.rel_min,
            rel_max=self.rel_max,
        )

    @property
    def person_net(self) -> PersonNetConfig:
        return PersonNetConfig(
            hidden=self.person_hidden,
            blocks=self.person_blocks,
            kernel=self.person_kernel,
            window=self.window or max(1, self.num_planes // 4),
            argmax=self.argmax,
        )

    @property
    def joint_net(self) -> JointNetConfig:
        return JointNetConfig(
            hidden=self.joint_hidden, dilations=self.joint_dilations, kernel=self.joint_kernel
        )

    @property
    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.adam_eps,
            batch_size=self.batch_size,
            epochs=self.epochs,
            joint_loss_weight=self.joint_loss_weight,
            val_fraction=self.val_fraction,
            checkpoint_every=self.checkpoint_every,
        )

    @property
    def perturbation(self) -> PerturbationConfig:
        return PerturbationConfig(jitter_std=self.jitter_std, drop_prob=self.drop_prob)

    @property
    def scene(self) -> SceneConfig:
        return SceneConfig(
            space_x=self.space_x,
            space_y=self.space_y,
            root_z_min=self.root_z_min,
            root_z_max=self.root_z_max,
            min_persons=self.min_persons,
            max_persons=self.max_persons,
            min_person_distance=self.min_person_distance,
        )

    def config_hash(self) -> str:
        """Short SHA-256 of the canonical JSON dump."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Return a validated copy with some keys replaced."""
        data = self.model_dump()
        data.update({k.lower(): v for k, v in overrides.items()})
        return RunConfig.model_validate(data)

    @classmethod
    def load(
        cls, path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None
    ) -> "RunConfig":
        """Load a key-value config file (if any) and apply overrides."""
        data: Dict[str, Any] = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise FileNotFoundError(f"Config file not found: {path}")
            data.update(
                {k.lower(): v for k, v in dotenv_values(path).items() if v is not None}
            )
        if overrides:
            data.update({k.lower(): v for k, v in overrides.items()})
        return cls.model_validate(data)

    def to_text(self) -> str:
        """Serialize as sorted `key=value` lines, loadable by `load`."""
        lines = [f"# config_hash={self.config_hash()}"]
        for key, value in sorted(self.model_dump(mode="json").items()):
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


# Global settings instance
settings = Settings()
