"""Domain types for plane-sweep pose estimation."""

from src.models.base import DomainModel, as_array
from src.models.camera import CameraParams, CameraRig, DepthPlaneSet, Point2D, Point3D
from src.models.pose import DepthDistribution, Pose2D, Pose3D, ScoreMatrix
from src.models.scene import SceneFrame, SkeletonTemplate, ViewObservation, stack_joints
from src.models.configs import (
    ArgmaxMode,
    JointNetConfig,
    OptimizerConfig,
    PersonNetConfig,
    PerturbationConfig,
    SceneConfig,
    SweepConfig,
)
from src.models.results import (
    AP_THRESHOLDS,
    EvalReport,
    FusedPose,
    FusedResult,
    PoseEstimate,
)

__all__ = [
    # Base
    "DomainModel",
    "as_array",

    # Camera
    "CameraParams",
    "CameraRig",
    "DepthPlaneSet",
    "Point2D",
    "Point3D",

    # Pose
    "DepthDistribution",
    "Pose2D",
    "Pose3D",
    "ScoreMatrix",

    # Scene
    "SceneFrame",
    "SkeletonTemplate",
    "ViewObservation",
    "stack_joints",

    # Configs
    "ArgmaxMode",
    "JointNetConfig",
    "OptimizerConfig",
    "PersonNetConfig",
    "PerturbationConfig",
    "SceneConfig",
    "SweepConfig",

    # Results
    "AP_THRESHOLDS",
    "EvalReport",
    "FusedPose",
    "FusedResult",
    "PoseEstimate",
]
