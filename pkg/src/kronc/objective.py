"""Keypoint centroids, the combined 3D + 2D clustering loss and its gradients.

For keypoint ``j`` seen in view ``i`` with weight ``m_ij``, the back-projection
``P_ij`` is pulled toward the weighted centroid ``C_j`` of all back-projections
of that keypoint, and ``C_j`` re-projected into view ``i`` is pulled toward the
observed pixel::

    L_ij  = |P_ij - C_j| + lambda * |uv_ij - proj_i(C_j)|
    total = (1 / J) * sum_j sum_i m_ij * L_ij

The centroids are functions of every pose and depth, and the gradients below
differentiate through them unless ``centroid_gradient`` is switched off.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import InactiveKeypoint, InvalidConfig, NoConstraints
from .geom import CameraIntrinsics, Scene, rot6d_backward, rot6d_to_matrix_batch, world_to_image

SKIP_2D = "skip-2d"
CLAMP_DEPTH = "clamp-depth"


@dataclass(frozen=True)
class ObjectiveConfig:
    """Loss settings.

    ``lambda_2d=None`` picks the scale-balancing default from the scene, see
    :func:`default_lambda`. ``centroid_gradient=False`` treats the centroids as
    constants during the backward pass (ablation only).

    Residuals shorter than ``residual_floor_3d`` (scene units) or
    ``residual_floor_2d`` (pixels) get a zero subgradient. Both norms have a
    kink at zero, and without the floor round-off residuals at an exact
    solution would produce unit-length gradients.

    With ``skip_offscreen_2d`` (the default) the 2D term of an observation is
    dropped while the centroid re-projects outside the image. A keypoint is
    only observed where it is visible, so comparing its pixel with a point
    off-frame measures nothing useful, and under large pose errors such terms
    dominate the loss with huge, misleading residuals. The check needs the
    image size and is skipped for intrinsics without one.
    """

    lambda_2d: Optional[float] = None
    min_effective_views: float = 2.0
    behind_camera_policy: str = SKIP_2D
    centroid_gradient: bool = True
    clamp_depth_eps: float = 1e-6
    residual_floor_3d: float = 1e-11
    residual_floor_2d: float = 1e-9
    skip_offscreen_2d: bool = True

    def __post_init__(self):
        if self.lambda_2d is not None and not self.lambda_2d >= 0:
            raise InvalidConfig("lambda_2d must be >= 0")
        if not self.min_effective_views >= 2:
            raise InvalidConfig("min_effective_views must be >= 2")
        if self.behind_camera_policy not in (SKIP_2D, CLAMP_DEPTH):
            raise InvalidConfig(f"unknown behind_camera_policy {self.behind_camera_policy!r}")


class CentroidSet(NamedTuple):
    centroids: np.ndarray  # (J, 3), NaN rows where inactive
    effective_counts: np.ndarray  # (J,)
    active_mask: np.ndarray  # (J,) bool


class LossReport(NamedTuple):
    total: float
    per_view: np.ndarray
    per_keypoint: np.ndarray
    term_3d: float
    term_2d: float
    lambda_2d: float


class Gradients(NamedTuple):
    rot6d: np.ndarray  # (N, 6)
    translation: np.ndarray  # (N, 3)
    depth: np.ndarray  # (N, J)


def scene_scale(translations: np.ndarray) -> float:
    """Mean translation norm of a pose set."""
    return float(np.mean(np.linalg.norm(translations, axis=1)))


def default_lambda(scene: Scene) -> float:
    """Scene scale over image diagonal: a full-diagonal pixel error weighs one scene unit."""
    return scene_scale(scene.translation_array()) / scene.intrinsics.diagonal


def resolve_lambda(scene: Scene, cfg: ObjectiveConfig) -> float:
    return default_lambda(scene) if cfg.lambda_2d is None else float(cfg.lambda_2d)


def active_keypoints(m: np.ndarray, cfg: ObjectiveConfig):
    """Effective view counts per keypoint and the mask of those that constrain anything."""
    counts = m.sum(axis=0)
    return counts, counts >= cfg.min_effective_views


def live_mask(m: np.ndarray, cfg: ObjectiveConfig) -> np.ndarray:
    """(N, J) mask of observations that enter the loss."""
    _, active = active_keypoints(m, cfg)
    return (m > 0) & active[None, :]


class KeypointProblem:
    """Parameter-independent pieces of the loss, computed once per scene.

    ``evaluate`` is the hot path of the optimizer. It works on dense (N, J)
    arrays, one per vector component, with masked entries zeroed out.
    """

    def __init__(self, intr: CameraIntrinsics, uv: np.ndarray, m: np.ndarray, cfg: ObjectiveConfig):
        self.intr = intr
        self.cfg = cfg
        n, J = m.shape
        self.counts, self.active = active_keypoints(m, cfg)
        self.live = (m > 0) & self.active[None, :]
        self.livef = self.live.astype(float)
        self.mw = np.where(self.live, m, 0.0)
        self.w = self.mw / J
        self.u = np.where(self.live, uv[..., 0], 0.0)
        self.v = np.where(self.live, uv[..., 1], 0.0)
        # Camera-frame ray K^-1 (u, v, 1); its z component is 1.
        self.rx = (self.u - intr.cx) / intr.fx
        self.ry = (self.v - intr.cy) / intr.fy
        safe = np.where(self.active, self.counts, 1.0)
        self.centroid_weights = self.mw / safe[None, :]

    def evaluate(self, rot6d, translation, depth, lambda_2d: float, with_grad: bool = True):
        """Returns ``(LossReport, Gradients | None, CentroidSet)``.

        Raises NoConstraints if no keypoint is active.
        """
        if not np.any(self.active):
            raise NoConstraints("no keypoint is visible in enough views")
        cfg, intr, w, cw = self.cfg, self.intr, self.w, self.centroid_weights
        rx, ry = self.rx, self.ry

        R = rot6d_to_matrix_batch(rot6d)
        Rc = [[R[:, a, b][:, None] for b in range(3)] for a in range(3)]  # (N, 1) columns
        tc = [translation[:, a][:, None] for a in range(3)]
        z = np.where(self.live, depth, 0.0)

        dirs = [Rc[a][0] * rx + Rc[a][1] * ry + Rc[a][2] for a in range(3)]  # R_i d_ij
        P = [dirs[a] * z + tc[a] for a in range(3)]
        C = [(cw * P[a]).sum(axis=0) for a in range(3)]

        # 3D term
        e = [P[a] - C[a] for a in range(3)]
        a3 = np.sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]) * self.livef

        # 2D term: centroid re-projected into each view
        x = [C[a] - tc[a] for a in range(3)]
        q = [Rc[0][b] * x[0] + Rc[1][b] * x[1] + Rc[2][b] * x[2] for b in range(3)]  # R_i^T (C_j - t_i)
        qz = q[2]
        if cfg.behind_camera_policy == SKIP_2D:
            valid = self.live & (qz > 0)
            qz_eff = np.where(valid, qz, 1.0)
            clamped = None
        else:
            valid = self.live
            clamped = qz < cfg.clamp_depth_eps
            qz_eff = np.where(clamped, cfg.clamp_depth_eps, qz)
        inv_qz = 1.0 / qz_eff
        uc = intr.fx * q[0] * inv_qz + intr.cx
        vc = intr.fy * q[1] * inv_qz + intr.cy
        if cfg.skip_offscreen_2d and intr.width is not None:
            valid = valid & (uc >= 0) & (uc <= intr.width) & (vc >= 0) & (vc <= intr.height)
        du = (uc - self.u) * valid
        dv = (vc - self.v) * valid
        b2 = np.sqrt(du * du + dv * dv)

        wa, wb = w * a3, w * b2
        per_kp_3d = wa.sum(axis=0)
        per_kp_2d = wb.sum(axis=0)
        term_3d = float(per_kp_3d.sum())
        term_2d = float(per_kp_2d.sum())
        report = LossReport(
            total=term_3d + lambda_2d * term_2d,
            per_view=(wa + lambda_2d * wb).sum(axis=1),
            per_keypoint=per_kp_3d + lambda_2d * per_kp_2d,
            term_3d=term_3d,
            term_2d=term_2d,
            lambda_2d=float(lambda_2d),
        )
        centroids = np.stack(C, axis=1)
        cset = CentroidSet(np.where(self.active[:, None], centroids, np.nan), self.counts, self.active)
        if not with_grad:
            return report, None, cset

        # Subgradient 0 at the kinks of both norms.
        nz = a3 > cfg.residual_floor_3d
        coef3 = w * nz / np.where(nz, a3, 1.0)
        gP = [coef3 * e[a] for a in range(3)]  # dL/dP from the 3D term
        gC = [-gP[a].sum(axis=0) for a in range(3)]

        nz = b2 > cfg.residual_floor_2d
        coef2 = lambda_2d * w * nz / np.where(nz, b2, 1.0)
        Hu, Hv = coef2 * du, coef2 * dv  # dL/d(u_C, v_C)
        gqz = -(Hu * intr.fx * q[0] + Hv * intr.fy * q[1]) * inv_qz * inv_qz
        if clamped is not None:
            gqz = np.where(clamped, 0.0, gqz)
        gq = [Hu * intr.fx * inv_qz, Hv * intr.fy * inv_qz, gqz]
        gx = [Rc[a][0] * gq[0] + Rc[a][1] * gq[1] + Rc[a][2] * gq[2] for a in range(3)]  # dL/d(C_j - t_i)
        g_t = [-gx[a].sum(axis=1) for a in range(3)]
        gC = [gC[a] + gx[a].sum(axis=0) for a in range(3)]
        g_R = [[(x[a] * gq[b]).sum(axis=1) for b in range(3)] for a in range(3)]

        if cfg.centroid_gradient:
            gP = [gP[a] + cw * gC[a] for a in range(3)]

        g_t = [g_t[a] + gP[a].sum(axis=1) for a in range(3)]
        g_z = (dirs[0] * gP[0] + dirs[1] * gP[1] + dirs[2] * gP[2]) * self.livef
        for a in range(3):
            gPz = gP[a] * z
            g_R[a][0] = g_R[a][0] + (gPz * rx).sum(axis=1)
            g_R[a][1] = g_R[a][1] + (gPz * ry).sum(axis=1)
            g_R[a][2] = g_R[a][2] + gPz.sum(axis=1)
        g_R = np.stack([np.stack(row, axis=1) for row in g_R], axis=1)
        g_r = rot6d_backward(rot6d, g_R)
        return report, Gradients(g_r, np.stack(g_t, axis=1), g_z), cset


def evaluate(
    intr: CameraIntrinsics,
    rot6d: np.ndarray,
    translation: np.ndarray,
    depth: np.ndarray,
    uv: np.ndarray,
    m: np.ndarray,
    lambda_2d: float,
    cfg: ObjectiveConfig,
    with_grad: bool = True,
):
    """One-shot loss (and gradient) evaluation on raw arrays."""
    return KeypointProblem(intr, uv, m, cfg).evaluate(rot6d, translation, depth, lambda_2d, with_grad)


def _scene_arrays(scene: Scene):
    if not scene.has_poses:
        raise InvalidConfig("scene has views without poses")
    return scene.rot6d_array(), scene.translation_array()


def compute_centroids(scene: Scene, cfg: ObjectiveConfig = ObjectiveConfig()) -> CentroidSet:
    """Weighted mean back-projection of every keypoint seen by enough views.

    Never raises for lack of constraints: an all-inactive scene yields an
    all-masked set.
    """
    counts, active = active_keypoints(scene.m, cfg)
    live = (scene.m > 0) & active[None, :]
    r, t = _scene_arrays(scene)
    R = rot6d_to_matrix_batch(r)
    rays = scene.intrinsics.rays(np.where(live[..., None], scene.uv, 0.0))
    z = np.where(live, scene.z, 0.0)
    P = np.einsum("nab,njb->nja", R, rays) * z[..., None] + t[:, None, :]
    mw = np.where(live, scene.m, 0.0)
    safe = np.where(active, counts, 1.0)
    C = np.einsum("nj,nja->ja", mw, P) / safe[:, None]
    C[~active] = np.nan
    return CentroidSet(C, counts, active)


def _offscreen(intr: CameraIntrinsics, u, v, cfg: ObjectiveConfig) -> bool:
    if not cfg.skip_offscreen_2d or intr.width is None:
        return False
    return not (0 <= u <= intr.width and 0 <= v <= intr.height)


def observation_loss(scene: Scene, centroids: CentroidSet, cfg: ObjectiveConfig, i: int, j: int) -> float:
    """Unweighted per-observation loss ``L_ij`` against a given centroid set."""
    if not centroids.active_mask[j]:
        raise InactiveKeypoint(f"keypoint {scene.keypoint_names[j]!r} is not active")
    if not scene.m[i, j] > 0:
        raise ValueError(f"keypoint {j} is not visible in view {i}")
    lam = resolve_lambda(scene, cfg)
    pose = scene.poses[i]
    C = centroids.centroids[j]
    ray = scene.intrinsics.rays(scene.uv[i, j])
    P = pose.rotation @ (ray * scene.z[i, j]) + pose.translation
    loss = float(np.linalg.norm(P - C))
    proj = world_to_image(scene.intrinsics, pose, C)
    z_cam = proj.z_cam
    if proj.behind_camera:
        if cfg.behind_camera_policy == SKIP_2D:
            return loss
        z_cam = cfg.clamp_depth_eps
    q = pose.rotation.T @ (C - pose.translation)
    uc = scene.intrinsics.fx * q[0] / z_cam + scene.intrinsics.cx
    vc = scene.intrinsics.fy * q[1] / z_cam + scene.intrinsics.cy
    if _offscreen(scene.intrinsics, uc, vc, cfg):
        return loss
    return loss + lam * float(np.hypot(uc - scene.uv[i, j, 0], vc - scene.uv[i, j, 1]))


def total_loss(scene: Scene, cfg: ObjectiveConfig = ObjectiveConfig()) -> LossReport:
    r, t = _scene_arrays(scene)
    lam = resolve_lambda(scene, cfg)
    report, _, _ = evaluate(scene.intrinsics, r, t, scene.z, scene.uv, scene.m, lam, cfg, with_grad=False)
    return report


def gradients(scene: Scene, cfg: ObjectiveConfig = ObjectiveConfig()) -> Gradients:
    """Exact partials of the total loss w.r.t. every 6D rotation, translation and depth.

    When ``cfg.lambda_2d`` is None the default weight is computed from the
    current poses and then held fixed, i.e. it is not differentiated.
    """
    r, t = _scene_arrays(scene)
    lam = resolve_lambda(scene, cfg)
    _, grads, _ = evaluate(scene.intrinsics, r, t, scene.z, scene.uv, scene.m, lam, cfg)
    return grads
