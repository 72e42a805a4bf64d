"""Pinhole camera model, 6D rotations and the two projective maps.

Poses are stored camera-to-world: a camera-frame point ``x`` maps to
``R @ x + t`` in the world frame, so the translation is the camera center.
Camera axes follow the computer-vision convention (x right, y down,
z forward), and a keypoint depth ``z`` is the camera-frame z coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DegenerateRotation, InvalidConfig, NotARotation

DEGENERATE_TOL = 1e-12
ROTATION_CHECK_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Zero-skew pinhole intrinsics shared by every view of a scene."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: Optional[int] = None
    height: Optional[int] = None

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidConfig("focal lengths must be positive")
        # Image size is optional for bare projection math; when given, the
        # principal point has to fall inside the image.
        if self.width is not None or self.height is not None:
            if self.width is None or self.height is None:
                raise InvalidConfig("width and height must be given together")
            if not (0 < self.cx < self.width and 0 < self.cy < self.height):
                raise InvalidConfig("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def diagonal(self) -> float:
        if self.width is None:
            raise InvalidConfig("image size unknown")
        return float(np.hypot(self.width, self.height))

    def rays(self, uv: np.ndarray) -> np.ndarray:
        """Camera-frame rays ``K^-1 (u, v, 1)`` with unit z component, shape (..., 3)."""
        uv = np.asarray(uv, dtype=float)
        x = (uv[..., 0] - self.cx) / self.fx
        y = (uv[..., 1] - self.cy) / self.fy
        return np.stack([x, y, np.ones_like(x)], axis=-1)


# --------------------------------------------------------------------------
# 6D rotation representation


def rot6d_to_matrix(r) -> np.ndarray:
    """Gram-Schmidt a 6-vector ``[a1, a2]`` into a rotation matrix ``[b1 b2 b3]``.

    Raises DegenerateRotation if ``a1`` vanishes or ``a2`` is parallel to it.
    """
    r = np.asarray(r, dtype=float)
    if r.shape != (6,):
        raise ValueError(f"expected a 6-vector, got shape {r.shape}")
    return rot6d_to_matrix_batch(r[None])[0]


def rot6d_to_matrix_batch(r: np.ndarray) -> np.ndarray:
    """Vectorised :func:`rot6d_to_matrix` over an (N, 6) array."""
    r = np.asarray(r, dtype=float)
    a1, a2 = r[:, :3], r[:, 3:]
    n1 = np.linalg.norm(a1, axis=1)
    if np.any(~(n1 >= DEGENERATE_TOL)):
        raise DegenerateRotation("first rotation column is (near) zero")
    b1 = a1 / n1[:, None]
    w = a2 - np.sum(b1 * a2, axis=1, keepdims=True) * b1
    n2 = np.linalg.norm(w, axis=1)
    if np.any(~(n2 >= DEGENERATE_TOL)):
        raise DegenerateRotation("rotation columns are (near) parallel")
    b2 = w / n2[:, None]
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=2)


def rot6d_backward(r: np.ndarray, grad_R: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. the recovered matrices back to the 6D vectors.

    ``r`` is (N, 6), ``grad_R`` is (N, 3, 3) holding dL/dR; returns (N, 6).
    """
    a1, a2 = r[:, :3], r[:, 3:]
    n1 = np.linalg.norm(a1, axis=1, keepdims=True)
    b1 = a1 / n1
    d = np.sum(b1 * a2, axis=1, keepdims=True)
    w = a2 - d * b1
    n2 = np.linalg.norm(w, axis=1, keepdims=True)
    b2 = w / n2

    g1, g2, g3 = grad_R[:, :, 0], grad_R[:, :, 1], grad_R[:, :, 2]
    # b3 = b1 x b2
    g1 = g1 + np.cross(b2, g3)
    g2 = g2 + np.cross(g3, b1)
    # b2 = w / |w|
    gw = (g2 - b2 * np.sum(b2 * g2, axis=1, keepdims=True)) / n2
    # w = a2 - (b1 . a2) b1
    b1_gw = np.sum(b1 * gw, axis=1, keepdims=True)
    ga2 = gw - b1 * b1_gw
    g1 = g1 - d * gw - a2 * b1_gw
    # b1 = a1 / |a1|
    ga1 = (g1 - b1 * np.sum(b1 * g1, axis=1, keepdims=True)) / n1
    return np.concatenate([ga1, ga2], axis=1)


def is_rotation(R, tol: float = ROTATION_CHECK_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(np.linalg.norm(R.T @ R - np.eye(3)) < tol and abs(np.linalg.det(R) - 1.0) < tol)


def matrix_to_rot6d(R) -> np.ndarray:
    """Drop the third column of a rotation matrix, returning ``[a1, a2]``."""
    R = np.asarray(R, dtype=float)
    if not is_rotation(R):
        raise NotARotation("matrix is not orthonormal with determinant +1")
    return np.concatenate([R[:, 0], R[:, 1]])


# --------------------------------------------------------------------------
# Poses and scenes


@dataclass(frozen=True)
class CameraPose:
    """Camera-to-world extrinsics with a 6D rotation."""

    rot6d: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rot6d", np.array(self.rot6d, dtype=float).reshape(6))
        object.__setattr__(self, "translation", np.array(self.translation, dtype=float).reshape(3))

    @classmethod
    def from_matrix(cls, R, t) -> "CameraPose":
        return cls(matrix_to_rot6d(R), t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.array([1.0, 0, 0, 0, 1, 0]), np.zeros(3))

    @property
    def rotation(self) -> np.ndarray:
        return rot6d_to_matrix(self.rot6d)

    @property
    def center(self) -> np.ndarray:
        return self.translation.copy()

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def normalized(self) -> "CameraPose":
        """Same pose with its 6D vector replaced by the exact matrix columns."""
        return CameraPose(matrix_to_rot6d(self.rotation), self.translation)


class KeypointObservation(NamedTuple):
    u: float
    v: float
    m: float
    z: float


class Projection(NamedTuple):
    u: float
    v: float
    z_cam: float

    @property
    def behind_camera(self) -> bool:
        return not self.z_cam > 0


def back_project(intr: CameraIntrinsics, pose: CameraPose, u, v, z) -> np.ndarray:
    """Lift pixel ``(u, v)`` at camera depth ``z`` into the world frame."""
    if not z > 0:
        raise ValueError("depth must be positive")
    ray = intr.rays(np.array([u, v], dtype=float))
    return pose.rotation @ (ray * z) + pose.translation


def world_to_image(intr: CameraIntrinsics, pose: CameraPose, P) -> Projection:
    """Project world point ``P`` into the view; check ``behind_camera`` on the result.

    Pixel coordinates are NaN/inf when the camera-frame depth is zero.
    """
    q = pose.rotation.T @ (np.asarray(P, dtype=float) - pose.translation)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * q[0] / q[2] + intr.cx
        v = intr.fy * q[1] / q[2] + intr.cy
    return Projection(float(u), float(v), float(q[2]))


@dataclass
class Scene:
    """N views of J named keypoints.

    Observations are stored as dense arrays: ``uv`` (N, J, 2), ``m`` (N, J)
    and ``z`` (N, J). An absent observation has ``m == 0``; an uninitialised
    depth is NaN. ``poses`` entries may be None for views with unknown pose.
    """

    intrinsics: CameraIntrinsics
    poses: list
    uv: np.ndarray
    m: np.ndarray
    z: np.ndarray
    keypoint_names: list
    view_ids: Optional[list] = None
    units: str = "m"

    def __post_init__(self):
        self.uv = np.array(self.uv, dtype=float)
        self.m = np.array(self.m, dtype=float)
        self.z = np.array(self.z, dtype=float)
        self.poses = list(self.poses)
        self.keypoint_names = [str(k) for k in self.keypoint_names]
        n, j = self.m.shape
        if self.view_ids is None:
            self.view_ids = [f"{i:04d}" for i in range(n)]
        self.view_ids = [str(v) for v in self.view_ids]
        if n < 2 or j < 1:
            raise InvalidConfig("a scene needs at least 2 views and 1 keypoint")
        if self.uv.shape != (n, j, 2) or self.z.shape != (n, j):
            raise InvalidConfig("observation arrays have inconsistent shapes")
        if len(self.poses) != n or len(self.view_ids) != n:
            raise InvalidConfig("pose and view-id lists must have one entry per view")
        if len(self.keypoint_names) != j or len(set(self.keypoint_names)) != j:
            raise InvalidConfig("keypoint names must be unique, one per keypoint")
        if np.any(~((self.m >= 0) & (self.m <= 1))):
            raise InvalidConfig("visibility weights must lie in [0, 1]")

    @property
    def n_views(self) -> int:
        return self.m.shape[0]

    @property
    def n_keypoints(self) -> int:
        return self.m.shape[1]

    @property
    def has_poses(self) -> bool:
        return all(p is not None for p in self.poses)

    @property
    def has_depths(self) -> bool:
        return not np.any(np.isnan(self.z[self.m > 0]))

    def observation(self, i: int, j: int) -> Optional[KeypointObservation]:
        if self.m[i, j] <= 0:
            return None
        return KeypointObservation(*self.uv[i, j], self.m[i, j], self.z[i, j])

    def rot6d_array(self) -> np.ndarray:
        return np.stack([p.rot6d for p in self.poses])

    def translation_array(self) -> np.ndarray:
        return np.stack([p.translation for p in self.poses])

    def replace(self, **changes) -> "Scene":
        fields = dict(
            intrinsics=self.intrinsics,
            poses=list(self.poses),
            uv=self.uv.copy(),
            m=self.m.copy(),
            z=self.z.copy(),
            keypoint_names=list(self.keypoint_names),
            view_ids=list(self.view_ids),
            units=self.units,
        )
        fields.update(changes)
        return Scene(**fields)

    def with_params(self, rot6d: np.ndarray, translation: np.ndarray, z: Optional[np.ndarray] = None) -> "Scene":
        poses = [CameraPose(r, t) for r, t in zip(rot6d, translation)]
        return self.replace(poses=poses, z=self.z.copy() if z is None else np.array(z, dtype=float))

    def subset_views(self, idx: Sequence[int]) -> "Scene":
        idx = list(idx)
        return self.replace(
            poses=[self.poses[i] for i in idx],
            uv=self.uv[idx],
            m=self.m[idx],
            z=self.z[idx],
            view_ids=[self.view_ids[i] for i in idx],
        )
