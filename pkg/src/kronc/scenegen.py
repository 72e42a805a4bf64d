"""Synthetic keypointed objects seen from a ring of cameras, with exact ground truth.

The object is an ellipsoid with keypoints on its surface, which is enough to
exercise pose registration: the optimizer only ever sees keypoint pixels.
The world's vertical axis is +z and cameras circle around it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Tuple

import numpy as np

from .errors import InvalidConfig
from .geom import CameraIntrinsics, CameraPose, Scene

VISIBILITY_POLICIES = ("front-facing-normal", "random-dropout", "both", "all")


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=400.0, fy=400.0, cx=320.0, cy=240.0, width=640, height=480)


@dataclass(frozen=True)
class SceneGenConfig:
    n_views: int = 80
    n_keypoints: int = 66
    radius: float = 4.0
    camera_height: float = 0.5
    object_extent: Tuple[float, float, float] = (1.6, 0.8, 0.6)
    visibility: str = "front-facing-normal"
    dropout_p: float = 0.0
    seed: int = 0
    intrinsics: CameraIntrinsics = field(default_factory=default_intrinsics)
    # Keypoint directions are kept away from the vertical poles, where a
    # ring of cameras sees a surface only at grazing angles.
    max_abs_elevation_sin: float = 0.8

    def __post_init__(self):
        if self.n_views < 2:
            raise InvalidConfig("n_views must be ≥ 2")
        if self.n_keypoints < 1:
            raise InvalidConfig("n_keypoints must be ≥ 1")
        if len(self.object_extent) != 3 or min(self.object_extent) <= 0:
            raise InvalidConfig("object_extent must be three positive half-sizes")
        if not self.radius > max(self.object_extent):
            raise InvalidConfig("radius must exceed the largest object extent")
        if self.visibility not in VISIBILITY_POLICIES:
            raise InvalidConfig(f"visibility must be one of {VISIBILITY_POLICIES}")
        if not 0 <= self.dropout_p <= 1:
            raise InvalidConfig("dropout_p must lie in [0, 1]")


class GroundTruthScene(NamedTuple):
    scene: Scene
    gt_poses: list
    gt_points: np.ndarray


def look_at(center, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world rotation with z toward ``target``, x right and y down, zero roll."""
    center = np.asarray(center, dtype=float)
    f = np.asarray(target, dtype=float) - center
    f /= np.linalg.norm(f)
    right = np.cross(f, up)
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        raise InvalidConfig("viewing direction is parallel to the up vector")
    right /= norm
    down = np.cross(f, right)
    return np.stack([right, down, f], axis=1)


def _ring_centers(n_views: int, radius: float, height: float, phase: float = 0.0) -> np.ndarray:
    theta = phase + 2.0 * np.pi * np.arange(n_views) / n_views
    return np.stack([radius * np.cos(theta), radius * np.sin(theta), np.full(n_views, float(height))], axis=1)


def circular_prior(n_views: int, radius: float = 4.0, height: float = 0.0, phase: float = 0.0) -> list:
    """Evenly spaced, horizontally looking cameras on a circle around the vertical axis.

    Each camera faces the axis with no tilt and no roll. This is the coarse
    initialisation used when no pose estimate is available.
    """
    if n_views < 2:
        raise InvalidConfig("n_views must be ≥ 2")
    if not radius > 0:
        raise InvalidConfig("radius must be positive")
    centers = _ring_centers(n_views, radius, height, phase)
    return [CameraPose.from_matrix(look_at(c, (0.0, 0.0, c[2])), c) for c in centers]


def sample_keypoints(cfg: SceneGenConfig, rng: np.random.Generator):
    """Points on the ellipsoid surface and their outward unit normals."""
    dirs = np.empty((0, 3))
    while len(dirs) < cfg.n_keypoints:
        d = rng.normal(size=(2 * cfg.n_keypoints, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        dirs = np.concatenate([dirs, d[np.abs(d[:, 2]) <= cfg.max_abs_elevation_sin]])
    dirs = dirs[: cfg.n_keypoints]
    ext = np.asarray(cfg.object_extent, dtype=float)
    points = dirs * ext
    normals = points / ext**2
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return points, normals


def front_facing_visibility(points, normals, centers) -> np.ndarray:
    """(N, J) mask: the outward normal points toward the camera."""
    to_cam = np.asarray(centers)[:, None, :] - np.asarray(points)[None, :, :]
    return np.einsum("nja,ja->nj", to_cam, np.asarray(normals)) > 0


def project_points(intr: CameraIntrinsics, poses, points):
    """Exact pixels (N, J, 2) and camera depths (N, J) of world points in every view."""
    R = np.stack([p.rotation for p in poses])
    t = np.stack([p.translation for p in poses])
    q = np.einsum("nba,njb->nja", R, points[None] - t[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * q[..., 0] / q[..., 2] + intr.cx
        v = intr.fy * q[..., 1] / q[..., 2] + intr.cy
    return np.stack([u, v], axis=-1), q[..., 2]


def generate_scene(cfg: SceneGenConfig = SceneGenConfig()) -> GroundTruthScene:
    rng = np.random.default_rng(cfg.seed)
    points, normals = sample_keypoints(cfg, rng)
    centers = _ring_centers(cfg.n_views, cfg.radius, cfg.camera_height)
    poses = [CameraPose.from_matrix(look_at(c, (0.0, 0.0, 0.0)), c) for c in centers]

    intr = cfg.intrinsics
    uv, depth = project_points(intr, poses, points)
    in_frame = (
        (depth > 0)
        & (uv[..., 0] >= 0)
        & (uv[..., 0] <= intr.width)
        & (uv[..., 1] >= 0)
        & (uv[..., 1] <= intr.height)
    )
    visible = in_frame
    if cfg.visibility in ("front-facing-normal", "both"):
        visible = visible & front_facing_visibility(points, normals, centers)
    if cfg.visibility in ("random-dropout", "both"):
        visible = visible & ~(rng.uniform(size=visible.shape) < cfg.dropout_p)
    m = visible.astype(float)

    scene = Scene(
        intrinsics=intr,
        poses=poses,
        uv=np.where(visible[..., None], uv, np.nan),
        m=m,
        z=np.where(visible, depth, np.nan),
        keypoint_names=[f"kp_{j:02d}" for j in range(cfg.n_keypoints)],
        view_ids=[f"view_{i:03d}" for i in range(cfg.n_views)],
    )
    return GroundTruthScene(scene, list(poses), points)
