"""Synthetic multi-person scenes: skeleton sampling, camera rigs and 2D rendering.

World frame: millimetres, z up. Persons stand in a box centred on the
origin; cameras sit on a ring outside it looking inward.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from src.core.config import RunConfig
from src.core.geometry import project_points, world_to_camera
from src.models import (
    CameraParams,
    CameraRig,
    PerturbationConfig,
    Pose2D,
    Pose3D,
    SceneConfig,
    SceneFrame,
    SkeletonTemplate,
    ViewObservation,
)


logger = logging.getLogger(__name__)

Seed = Union[int, np.random.Generator]

SKELETON = SkeletonTemplate(
    joint_names=(
        "pelvis", "neck", "head",
        "l_shoulder", "l_elbow", "l_wrist",
        "r_shoulder", "r_elbow", "r_wrist",
        "l_hip", "l_knee", "l_ankle",
        "r_hip", "r_knee", "r_ankle",
    ),
    parents=(-1, 0, 1, 1, 3, 4, 1, 6, 7, 0, 9, 10, 0, 12, 13),
    bone_lengths=(
        0.0, 500.0, 200.0,
        180.0, 280.0, 250.0,
        180.0, 280.0, 250.0,
        110.0, 430.0, 420.0,
        110.0, 430.0, 420.0,
    ),
    # head, torso, upper/lower arms, upper/lower legs
    pcp_parts=(
        (1, 2), (0, 1),
        (3, 4), (4, 5), (6, 7), (7, 8),
        (9, 10), (10, 11), (12, 13), (13, 14),
    ),
)

IMAGE_WIDTH = 1920
IMAGE_HEIGHT = 1080
FOCAL_LENGTH = 1000.0
MAX_POSE_ATTEMPTS = 1000


def _rng(seed: Seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# -- camera rigs ----------------------------------------------------------------


def look_at(
    name: str,
    center: Sequence[float],
    target: Sequence[float],
    focal: float = FOCAL_LENGTH,
    width: int = IMAGE_WIDTH,
    height: int = IMAGE_HEIGHT,
) -> CameraParams:
    """Camera at `center` whose optical axis passes through `target` (z-up world)."""
    c = np.asarray(center, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - c
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    K = np.array([[focal, 0.0, width / 2.0], [0.0, focal, height / 2.0], [0.0, 0.0, 1.0]])
    return CameraParams(name=name, K=K, R=R, t=-R @ c, width=width, height=height)


def default_rig(
    num_cameras: int = 5, radius: float = 7500.0, height: float = 2500.0, aim_height: float = 1000.0
) -> CameraRig:
    """Evenly spaced ring of cameras looking at the centre of the capture space."""
    angles = 2.0 * np.pi * np.arange(num_cameras) / num_cameras
    return [
        look_at(f"cam{i}", (radius * np.cos(a), radius * np.sin(a), height), (0.0, 0.0, aim_height))
        for i, a in enumerate(angles)
    ]


def sample_rig(
    seed: Seed,
    num_cameras: int = 5,
    radius: Tuple[float, float] = (6500.0, 8500.0),
    height: Tuple[float, float] = (1500.0, 3000.0),
    aim_jitter: float = 500.0,
) -> CameraRig:
    """Random ring of cameras: jittered azimuth, radius, height and aim point."""
    rng = _rng(seed)
    base = 2.0 * np.pi * np.arange(num_cameras) / num_cameras
    spread = np.pi / num_cameras
    rig = []
    for i, a in enumerate(base + rng.uniform(-spread / 2, spread / 2, num_cameras)):
        r = rng.uniform(*radius)
        center = (r * np.cos(a), r * np.sin(a), rng.uniform(*height))
        aim = (*rng.uniform(-aim_jitter, aim_jitter, 2), rng.uniform(800.0, 1200.0))
        rig.append(look_at(f"cam{i}", center, aim))
    return rig


# -- poses ------------------------------------------------------------------------


def _rotvec(rng: np.random.Generator, max_deg: float) -> Rotation:
    return Rotation.from_rotvec(rng.uniform(-1.0, 1.0, 3) * np.radians(max_deg))


def _bend(direction: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    return Rotation.from_rotvec(angle * axis).apply(direction)


def _body_frame_joints(rng: np.random.Generator, template: SkeletonTemplate) -> np.ndarray:
    """Joint positions relative to the root, facing +y, before the random yaw.

    Every bone is a unit direction times its template length.
    """
    L = template.bone_lengths
    idx = template.index
    joints = np.zeros((template.num_joints, 3))
    down = np.array([0.0, 0.0, -1.0])

    torso = _rotvec(rng, 15.0)
    up = torso.apply([0.0, 0.0, 1.0])
    lateral = torso.apply([1.0, 0.0, 0.0])
    neck = joints[idx("neck")] = L[idx("neck")] * up
    joints[idx("head")] = neck + L[idx("head")] * _rotvec(rng, 20.0).apply(up)

    for side, sign in (("l", 1.0), ("r", -1.0)):
        shoulder = neck + L[idx(f"{side}_shoulder")] * sign * lateral
        arm = torso * Rotation.from_euler(
            "xy", [rng.uniform(-40.0, 150.0), -sign * rng.uniform(0.0, 150.0)], degrees=True
        )
        upper = arm.apply(down)
        perpendicular = np.cross(upper, rng.normal(size=3))
        fore = _bend(upper, perpendicular, np.radians(rng.uniform(0.0, 140.0)))
        elbow = shoulder + L[idx(f"{side}_elbow")] * upper
        joints[idx(f"{side}_shoulder")] = shoulder
        joints[idx(f"{side}_elbow")] = elbow
        joints[idx(f"{side}_wrist")] = elbow + L[idx(f"{side}_wrist")] * fore

        hip = L[idx(f"{side}_hip")] * sign * np.array([1.0, 0.0, 0.0])
        leg = Rotation.from_euler(
            "xy", [rng.uniform(-30.0, 100.0), -sign * rng.uniform(-10.0, 40.0)], degrees=True
        )
        thigh = leg.apply(down)
        shin = _bend(thigh, leg.apply([1.0, 0.0, 0.0]), -np.radians(rng.uniform(0.0, 130.0)))
        knee = hip + L[idx(f"{side}_knee")] * thigh
        joints[idx(f"{side}_hip")] = hip
        joints[idx(f"{side}_knee")] = knee
        joints[idx(f"{side}_ankle")] = knee + L[idx(f"{side}_ankle")] * shin
    return joints


def generate_pose(
    seed: Seed,
    template: SkeletonTemplate = SKELETON,
    scene: Optional[SceneConfig] = None,
    person_id: Optional[int] = None,
) -> Pose3D:
    """Random pose: uniform root in the scene box, uniform facing, sampled limb angles.

    Limb samples reaching farther than `scene.max_reach` from the root are
    redrawn, so every relative depth stays inside the relative plane range.
    """
    rng = _rng(seed)
    scene = scene or SceneConfig()
    root = np.array([rng.uniform(lo, hi) for lo, hi in scene.bounds])
    yaw = Rotation.from_euler("z", rng.uniform(0.0, 2.0 * np.pi))
    for _ in range(MAX_POSE_ATTEMPTS):
        local = _body_frame_joints(rng, template)
        if np.linalg.norm(local, axis=1).max() <= scene.max_reach:
            return Pose3D(joints=yaw.apply(local) + root, person_id=person_id)
    raise RuntimeError(f"no pose within reach {scene.max_reach} mm after {MAX_POSE_ATTEMPTS} draws")


def generate_scene(
    seed: Seed,
    scene: Optional[SceneConfig] = None,
    template: SkeletonTemplate = SKELETON,
    num_persons: Optional[int] = None,
) -> List[Pose3D]:
    """Persons 0..N-1 whose roots lie at least `min_person_distance` apart on the ground plane."""
    rng = _rng(seed)
    scene = scene or SceneConfig()
    n = num_persons if num_persons is not None else int(rng.integers(scene.min_persons, scene.max_persons + 1))
    persons: List[Pose3D] = []
    for pid in range(n):
        for _ in range(MAX_POSE_ATTEMPTS):
            pose = generate_pose(rng, template, scene, person_id=pid)
            if all(
                np.linalg.norm(pose.root[:2] - other.root[:2]) >= scene.min_person_distance
                for other in persons
            ):
                persons.append(pose)
                break
        else:
            raise RuntimeError(f"could not place person {pid} of {n} in the scene")
    return persons


# -- rendering --------------------------------------------------------------------


def observe(
    person: Pose3D, camera: CameraParams, perturb: PerturbationConfig, rng: np.random.Generator
) -> Optional[Pose2D]:
    """Noisy 2D observation of one person, or None when no joint is in view.

    Dropped, out-of-image and behind-camera joints are invalid with zero
    confidence. Random draws happen for every joint regardless of outcome.
    """
    J = person.num_joints
    pixels, depth = project_points(camera, person.joints)
    jitter = rng.normal(0.0, perturb.jitter_std, (J, 2)) if perturb.jitter_std > 0 else np.zeros((J, 2))
    dropped = rng.random(J) < perturb.drop_prob

    in_front = depth > 0.0
    in_image = (
        in_front
        & (pixels[:, 0] >= 0.0) & (pixels[:, 0] < camera.width)
        & (pixels[:, 1] >= 0.0) & (pixels[:, 1] < camera.height)
    )
    if not in_image.any():
        return None

    if perturb.jitter_std > 0:
        sigma_c = perturb.confidence_sigma
        conf = np.exp(-np.sum(jitter ** 2, axis=1) / (2.0 * sigma_c ** 2))
    else:
        conf = np.ones(J)
    valid = in_image & ~dropped
    observed = np.where(in_front[:, None], pixels + jitter, 0.0)
    return Pose2D(joints=observed, confidences=np.where(valid, conf, 0.0), valid=valid)


def render_frame(
    persons: Sequence[Pose3D],
    rig: CameraRig,
    perturb: Optional[PerturbationConfig] = None,
    seed: Seed = 0,
    frame_id: int = 0,
    store_rig: bool = False,
) -> SceneFrame:
    """Project every person into every camera and perturb the 2D joints."""
    rng = _rng(seed)
    perturb = perturb or PerturbationConfig()
    views = []
    for camera in rig:
        poses, ids = [], []
        for person in persons:
            pose = observe(person, camera, perturb, rng)
            if pose is not None:
                poses.append(pose)
                ids.append(person.person_id)
        views.append(ViewObservation(camera=camera.name, poses=poses, person_ids=ids))
    return SceneFrame(
        frame_id=frame_id, persons=list(persons), views=views, rig=list(rig) if store_rig else None
    )


def ground_truth_depths(
    frame: SceneFrame, view: int, rig: Optional[CameraRig] = None
) -> Dict[int, Tuple[float, np.ndarray]]:
    """Per observed person: root depth and per-joint depth relative to it, in camera `view`.

    Persons absent from the view are skipped.
    """
    camera = (frame.rig or rig)[view]
    out = {}
    for pid in frame.views[view].person_ids:
        depth = world_to_camera(camera, frame.person(pid).joints)[:, 2]
        out[pid] = (float(depth[0]), depth - depth[0])
    return out


# -- datasets ---------------------------------------------------------------------


def generate_frame(config: RunConfig, rig: CameraRig, frame_id: int, seed: int) -> SceneFrame:
    """One frame, seeded by (seed, frame_id) so frames can be built in any order."""
    rng = np.random.default_rng([seed, frame_id])
    persons = generate_scene(rng, config.scene)
    if config.random_viewpoints:
        rig = sample_rig(rng, config.num_cameras)
    return render_frame(
        persons, rig, config.perturbation, rng, frame_id, store_rig=config.random_viewpoints
    )


def generate_frames(
    config: RunConfig,
    rig: CameraRig,
    seed: Optional[int] = None,
    count: Optional[int] = None,
    start: int = 0,
    threads: int = 1,
) -> Iterator[SceneFrame]:
    """Frames start..start+count-1 in order; generation may run on several threads."""
    seed = config.seed if seed is None else seed
    count = config.frames if count is None else count
    ids = range(start, start + count)
    if threads <= 1:
        for i in ids:
            yield generate_frame(config, rig, i, seed)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(lambda i: generate_frame(config, rig, i, seed), ids)
