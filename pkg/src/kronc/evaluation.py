"""Pose perturbation, similarity alignment and rotation/translation error metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateConfiguration, InvalidConfig
from .geom import CameraPose, is_rotation


@dataclass(frozen=True)
class PerturbConfig:
    sigma_rot: float = 4.0  # degrees
    sigma_trans: float = 0.5  # scene units
    seed: int = 0

    def __post_init__(self):
        if not (self.sigma_rot >= 0 and self.sigma_trans >= 0):
            raise InvalidConfig("noise standard deviations must be >= 0")


def perturb_poses(poses: Sequence[CameraPose], cfg: PerturbConfig = PerturbConfig()) -> list:
    """Compose each camera-to-world pose with random noise on the right.

    The noise transform rotates by an angle ~ N(0, sigma_rot) degrees about a
    uniformly random axis and translates by N(0, sigma_trans^2 I), both in the
    camera's own frame, so viewing direction and position both change.
    """
    n = len(poses)
    rng = np.random.default_rng(cfg.seed)
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = np.deg2rad(cfg.sigma_rot) * rng.normal(size=n)
    shifts = cfg.sigma_trans * rng.normal(size=(n, 3))
    dR = Rotation.from_rotvec(axes * angles[:, None]).as_matrix()

    out = []
    for pose, Rn, tn in zip(poses, dR, shifts):
        R = pose.rotation
        out.append(CameraPose.from_matrix(R @ Rn, pose.translation + R @ tn))
    return out


@dataclass(frozen=True)
class SimilarityTransform:
    """``x -> scale * rotation @ x + translation``."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidConfig("scale must be positive")
        if not is_rotation(self.rotation):
            raise InvalidConfig("rotation must be orthonormal with determinant +1")

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return self.scale * points @ self.rotation.T + self.translation

    def apply_pose(self, pose: CameraPose) -> CameraPose:
        """Move a camera rigidly with the transform, scaling its center."""
        return CameraPose.from_matrix(self.rotation @ pose.rotation, self.apply(pose.translation))

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.eye(3), np.zeros(3))


def umeyama_align(estimated, reference, rank_tol: float = 1e-9) -> SimilarityTransform:
    """Least-squares similarity mapping ``estimated`` points onto ``reference``.

    Closed form with the determinant sign fix, so the rotation is never a
    reflection. Raises DegenerateConfiguration when the estimated points are
    coincident or collinear.
    """
    x = np.asarray(estimated, dtype=float)
    y = np.asarray(reference, dtype=float)
    if x.shape != y.shape or x.ndim != 2 or x.shape[1] != 3:
        raise ValueError("expected two (N, 3) arrays of equal shape")
    if x.shape[0] < 3:
        raise DegenerateConfiguration("need at least 3 points")

    mx, my = x.mean(axis=0), y.mean(axis=0)
    dx, dy = x - mx, y - my
    spread = np.linalg.svd(dx, compute_uv=False)
    if spread[0] <= 0 or spread[1] <= rank_tol * spread[0]:
        raise DegenerateConfiguration("points are coincident or collinear")

    n = x.shape[0]
    cov = dy.T @ dx / n
    U, D, Vt = np.linalg.svd(cov)
    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    R = U @ np.diag(S) @ Vt
    var_x = np.sum(dx * dx) / n
    scale = float(np.dot(D, S) / var_x)
    t = my - scale * R @ mx
    return SimilarityTransform(scale, R, t)


def rotation_angle_deg(Ra, Rb) -> np.ndarray:
    """Geodesic angle between rotation stacks in degrees.

    Uses ``|Ra - Rb|_F = 2 sqrt(2) sin(theta / 2)``, which stays accurate for
    tiny angles where the arccos-of-trace form loses half its digits.
    """
    diff = np.linalg.norm(np.asarray(Ra) - np.asarray(Rb), axis=(-2, -1))
    return np.rad2deg(2.0 * np.arcsin(np.clip(diff / (2.0 * np.sqrt(2.0)), 0.0, 1.0)))


@dataclass(frozen=True)
class EvalReport:
    eps_rot: float
    eps_trans: float
    per_view_rot: np.ndarray
    per_view_trans: np.ndarray
    alignment: SimilarityTransform
    units: str = "m"

    @property
    def eps_trans_cm(self) -> Optional[float]:
        return 100.0 * self.eps_trans if self.units == "m" else None

    def as_dict(self) -> dict:
        out = {
            "eps_rot_deg": self.eps_rot,
            "eps_trans": self.eps_trans,
            "units": self.units,
            "per_view_rot_deg": self.per_view_rot.tolist(),
            "per_view_trans": self.per_view_trans.tolist(),
            "alignment": {
                "scale": self.alignment.scale,
                "rotation": self.alignment.rotation.tolist(),
                "translation": self.alignment.translation.tolist(),
            },
        }
        if self.eps_trans_cm is not None:
            out["eps_trans_cm"] = self.eps_trans_cm
        return out

    def summary(self) -> str:
        line = f"eps_R = {self.eps_rot:.3f} deg, eps_t = {self.eps_trans:.3f} {self.units}"
        if self.eps_trans_cm is not None:
            line += f" ({self.eps_trans_cm:.2f} cm)"
        return line


def pose_errors(estimated: Sequence[CameraPose], reference: Sequence[CameraPose], units: str = "m") -> EvalReport:
    """Align estimated camera centers to the reference, then measure per-view errors."""
    if len(estimated) != len(reference):
        raise ValueError(f"view count mismatch: {len(estimated)} vs {len(reference)}")
    c_est = np.stack([p.translation for p in estimated])
    c_ref = np.stack([p.translation for p in reference])
    sim = umeyama_align(c_est, c_ref)

    R_est = np.stack([p.rotation for p in estimated])
    R_ref = np.stack([p.rotation for p in reference])
    R_aligned = np.einsum("ab,nbc->nac", sim.rotation, R_est)
    rot = rotation_angle_deg(R_aligned, R_ref)
    trans = np.linalg.norm(sim.apply(c_est) - c_ref, axis=1)
    return EvalReport(float(rot.mean()), float(trans.mean()), rot, trans, sim, units)
