"""Pinhole camera model: projection, back-projection to depth planes, pose warping.

Units are millimetres in the world/camera frames and pixels in the image.
Cameras are ideal pinholes; lens distortion is out of model.
"""

import json
import logging
from pathlib import Path
from typing import Any, List, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src.models import CameraParams, CameraRig, Point2D, Point3D, Pose2D


logger = logging.getLogger(__name__)

ArrayLike = Union[Sequence[float], np.ndarray]


class BehindCameraError(ValueError):
    """A point has non-positive depth in the camera frame."""

    def __init__(self, depth: float) -> None:
        super().__init__(f"behind camera (camera-frame depth {depth:.6g} mm)")
        self.depth = depth


class InvalidDepthError(ValueError):
    """Back-projection was asked for a non-positive depth."""

    def __init__(self, depth: float) -> None:
        super().__init__(f"invalid depth {depth!r}: must be > 0")
        self.depth = depth


class RigFormatError(ValueError):
    """A camera rig document is malformed."""


def world_to_camera(camera: CameraParams, points: np.ndarray) -> np.ndarray:
    """Transform (..., 3) world points into the camera frame."""
    return points @ camera.R.T + camera.t


def camera_to_world(camera: CameraParams, points: np.ndarray) -> np.ndarray:
    """Transform (..., 3) camera-frame points into the world frame."""
    return (points - camera.t) @ camera.R


def pixel_rays(camera: CameraParams, pixels: np.ndarray) -> np.ndarray:
    """Camera-frame rays with unit z for (..., 2) pixels."""
    homo = np.concatenate([pixels, np.ones(pixels.shape[:-1] + (1,))], axis=-1)
    return homo @ camera.K_inv.T


def project_points(camera: CameraParams, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Project (..., 3) world points; returns pixels and camera-frame depths.

    Pixels of points with non-positive depth are meaningless; callers mask them.
    """
    cam = world_to_camera(camera, points)
    depth = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        img = cam @ camera.K.T
        safe = np.where(depth > 0.0, depth, 1.0)[..., None]
        pixels = img[..., :2] / safe
    return pixels, depth


def project(camera: CameraParams, point: ArrayLike) -> Point2D:
    """Project one world point to the image plane."""
    X = np.asarray(point, dtype=np.float64)
    pixels, depth = project_points(camera, X[None, :])
    if not depth[0] > 0.0:
        raise BehindCameraError(float(depth[0]))
    return Point2D(float(pixels[0, 0]), float(pixels[0, 1]))


def back_project_points(camera: CameraParams, pixels: np.ndarray, depths: Any) -> np.ndarray:
    """Lift (..., 2) pixels to world points at the given camera-frame depths."""
    rays = pixel_rays(camera, pixels)
    return camera_to_world(camera, rays * np.asarray(depths, dtype=np.float64)[..., None])


def back_project(camera: CameraParams, point: ArrayLike, depth: float) -> Point3D:
    """World point on the pixel ray of `point` whose camera-frame depth is `depth`."""
    if not depth > 0.0:
        raise InvalidDepthError(depth)
    X = back_project_points(camera, np.asarray(point, dtype=np.float64)[None, :], depth)[0]
    return Point3D(float(X[0]), float(X[1]), float(X[2]))


def relative_transform(target_cam: CameraParams, ref_cam: CameraParams) -> Tuple[np.ndarray, np.ndarray]:
    """(A, b) with X_ref = A @ X_target + b between the two camera frames."""
    A = ref_cam.R @ target_cam.R.T
    b = ref_cam.t - A @ target_cam.t
    return A, b


def warp_joints(
    target_cam: CameraParams,
    ref_cam: CameraParams,
    joints: np.ndarray,
    depths: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Warp (..., J, 2) target-view joints through every depth in (..., P) `depths`.

    All joints of a pose share each depth plane. Returns (..., P, J, 2)
    reference-view pixels and a (..., P, J) mask of joints landing in front of
    the reference camera. Computed as K_ref (d * A r + b) with r the unit-z
    target rays, so the cost is linear in the number of planes.
    """
    A, b = relative_transform(target_cam, ref_cam)
    rays = pixel_rays(target_cam, joints) @ A.T  # (..., J, 3)
    depths = np.asarray(depths, dtype=np.float64)
    cam = depths[..., :, None, None] * rays[..., None, :, :] + b  # (..., P, J, 3)
    z = cam[..., 2]
    in_front = (z > 0.0) & (depths[..., :, None] > 0.0)
    img = cam @ ref_cam.K.T
    with np.errstate(divide="ignore", invalid="ignore"):
        pixels = img[..., :2] / np.where(in_front, z, 1.0)[..., None]
    pixels = np.where(in_front[..., None], pixels, 0.0)
    return pixels, in_front


def warp_pose(
    target_cam: CameraParams, ref_cam: CameraParams, pose: Pose2D, depth: float
) -> Pose2D:
    """Back-project `pose` to the plane at `depth` and project it into `ref_cam`.

    Joints that land behind the reference camera are flagged invalid (and
    zeroed); joints invalid in the input stay invalid. Confidences pass through.
    """
    if not depth > 0.0:
        raise InvalidDepthError(depth)
    pixels, in_front = warp_joints(target_cam, ref_cam, pose.joints, np.array([depth]))
    valid = pose.valid & in_front[0]
    if not in_front[0].all():
        logger.debug("%d joints warp behind camera %s", int((~in_front[0]).sum()), ref_cam.name)
    return Pose2D(joints=pixels[0], confidences=pose.confidences, valid=valid)


def load_rig(path: Union[str, Path]) -> CameraRig:
    """Load a camera rig JSON document.

    Accepts either the bare array of camera objects or an object with a
    `cameras` array (the form written with an embedded config hash).
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except UnicodeDecodeError as e:
        raise RigFormatError(f"{path}: not UTF-8 text ({e})") from e
    except json.JSONDecodeError as e:
        raise RigFormatError(f"{path}: not valid JSON ({e})") from e
    return rig_from_json(data)


def rig_from_json(data: Any) -> CameraRig:
    if isinstance(data, dict):
        data = data.get("cameras")
    if not isinstance(data, list) or not data:
        raise RigFormatError("rig must be a non-empty array of cameras")
    rig: List[CameraParams] = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise RigFormatError(f"camera {i} must be an object, got {type(entry).__name__}")
        missing = {"name", "K", "R", "t", "width", "height"} - set(entry)
        if missing:
            raise RigFormatError(f"camera {i} is missing fields: {sorted(missing)}")
        try:
            rig.append(CameraParams(**entry))
        except (ValidationError, TypeError) as e:
            raise RigFormatError(f"camera {i} ({entry.get('name')}): {e}") from e
    names = [c.name for c in rig]
    if len(set(names)) != len(names):
        raise RigFormatError("camera names must be unique")
    return rig


def rig_to_json(rig: CameraRig, config_hash: str = "") -> Any:
    cameras = [c.to_dict() for c in rig]
    if not config_hash:
        return cameras
    return {"config_hash": config_hash, "cameras": cameras}


def save_rig(rig: CameraRig, path: Union[str, Path], config_hash: str = "") -> None:
    Path(path).write_text(
        json.dumps(rig_to_json(rig, config_hash), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
