"""Joint optimization of camera poses and keypoint depths.

Every step recovers the rotations from their 6D vectors, recomputes the
keypoint centroids, evaluates the loss and its exact gradient, and applies one
Adam update (or a plain gradient step) under a half-cosine learning-rate decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional

import numpy as np

from .errors import InvalidConfig, NonFiniteLoss, NoConstraints, ZeroScale
from .geom import Scene
from .objective import KeypointProblem, ObjectiveConfig, live_mask, resolve_lambda, scene_scale

PROFILES = {
    "synthetic": 0.01,
    "real": 0.001,
}


@dataclass(frozen=True)
class OptimizerConfig:
    steps: int = 10000
    learning_rate: float = 0.01
    final_factor: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    freeze_depths: bool = False
    method: str = "adam"
    rotation_lr_scale: float = 1.0
    translation_lr_scale: float = 1.0
    depth_lr_scale: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.steps, (int, np.integer)) and self.steps >= 1):
            raise InvalidConfig("steps must be an integer >= 1")
        if not self.learning_rate >= 0:
            raise InvalidConfig("learning_rate must be >= 0")
        if not 0 < self.final_factor <= 1:
            raise InvalidConfig("final_factor must lie in (0, 1]")
        if self.method not in ("adam", "gd"):
            raise InvalidConfig(f"unknown method {self.method!r}")

    @classmethod
    def profile(cls, name: str, **overrides) -> "OptimizerConfig":
        """Hyperparameters for the ``synthetic`` or ``real`` regime."""
        if name not in PROFILES:
            raise InvalidConfig(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
        return cls(**{"learning_rate": PROFILES[name], **overrides})


def scheduled_lr(cfg: OptimizerConfig, s: int) -> float:
    """Half-cosine decay from ``lr`` at s=0 to ``lr * final_factor`` at s=steps."""
    f = cfg.final_factor
    return cfg.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + math.cos(math.pi * s / cfg.steps)))


class HistoryRow(NamedTuple):
    step: int
    lr: float
    total: float
    term_3d: float
    term_2d: float


@dataclass
class OptimizerState:
    rot6d: np.ndarray
    translation: np.ndarray
    depth: np.ndarray
    lambda_2d: float
    view_live: np.ndarray
    depth_live: np.ndarray
    problem: KeypointProblem
    moments: dict = field(default_factory=dict)
    step: int = 0
    history: List[HistoryRow] = field(default_factory=list)

    @classmethod
    def from_scene(cls, scene: Scene, obj_cfg: ObjectiveConfig = ObjectiveConfig()) -> "OptimizerState":
        if not scene.has_poses:
            raise InvalidConfig("every view needs an initial pose")
        live = live_mask(scene.m, obj_cfg)
        if not live.any():
            raise NoConstraints("no keypoint is visible in enough views")
        if np.any(np.isnan(scene.z[live])):
            raise InvalidConfig("depths must be initialised before optimizing")
        r, t = scene.rot6d_array(), scene.translation_array()
        z = scene.z.copy()
        return cls(
            rot6d=r,
            translation=t,
            depth=z,
            lambda_2d=resolve_lambda(scene, obj_cfg),
            view_live=live.any(axis=1),
            depth_live=live,
            problem=KeypointProblem(scene.intrinsics, scene.uv, scene.m, obj_cfg),
            moments={k: (np.zeros_like(v), np.zeros_like(v)) for k, v in (("r", r), ("t", t), ("z", z))},
        )

    def live_parameter_count(self, freeze_depths: bool = False) -> int:
        n_depth = 0 if freeze_depths else int(self.depth_live.sum())
        return 9 * int(self.view_live.sum()) + n_depth

    def copy(self) -> "OptimizerState":
        return replace(
            self,
            rot6d=self.rot6d.copy(),
            translation=self.translation.copy(),
            depth=self.depth.copy(),
            moments={k: (a.copy(), b.copy()) for k, (a, b) in self.moments.items()},
        )

    def to_scene(self, scene: Scene) -> Scene:
        return scene.with_params(self.rot6d, self.translation, self.depth)


def init_depths(scene: Scene, seed=0) -> Scene:
    """Draw every visible keypoint depth uniformly from ``[w/2, w]``, ``w`` the mean camera distance."""
    if not scene.has_poses:
        raise InvalidConfig("depth initialisation needs initial poses")
    omega = scene_scale(scene.translation_array())
    if not omega > 0:
        raise ZeroScale("all cameras sit at the origin; depth scale is undefined")
    rng = np.random.default_rng(seed)
    draw = rng.uniform(0.5 * omega, omega, size=scene.m.shape)
    z = np.where(scene.m > 0, draw, np.nan)
    return scene.replace(z=z)


def adam_update(value, grad, moments, t: int, lr: float, cfg: OptimizerConfig):
    """One bias-corrected Adam update; ``t`` counts from 1. Returns (value, moments)."""
    m1, m2 = moments
    m1 = cfg.adam_beta1 * m1 + (1 - cfg.adam_beta1) * grad
    m2 = cfg.adam_beta2 * m2 + (1 - cfg.adam_beta2) * grad * grad
    m_hat = m1 / (1 - cfg.adam_beta1**t)
    v_hat = m2 / (1 - cfg.adam_beta2**t)
    return value - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps), (m1, m2)


def step(
    state: OptimizerState,
    scene: Scene,
    cfg: OptimizerConfig,
    obj_cfg: ObjectiveConfig = ObjectiveConfig(),
) -> OptimizerState:
    """One update of all live parameters; returns a new state.

    The history list is shared with (and appended through) the input state.
    Raises NonFiniteLoss, leaving the input state untouched, if the loss or
    any gradient is not finite.
    """
    problem = state.problem
    if problem.cfg != obj_cfg:
        problem = KeypointProblem(scene.intrinsics, scene.uv, scene.m, obj_cfg)
    with np.errstate(invalid="ignore", over="ignore"):
        report, grads, _ = problem.evaluate(state.rot6d, state.translation, state.depth, state.lambda_2d)
    if not (
        math.isfinite(report.total)
        and np.all(np.isfinite(grads.rot6d))
        and np.all(np.isfinite(grads.translation))
        and np.all(np.isfinite(grads.depth))
    ):
        raise NonFiniteLoss(state.step)

    lr = scheduled_lr(cfg, state.step)
    new = state.copy()
    new.history.append(HistoryRow(state.step, lr, report.total, report.term_3d, report.term_2d))
    groups = [
        ("r", "rot6d", grads.rot6d, cfg.rotation_lr_scale, state.view_live[:, None]),
        ("t", "translation", grads.translation, cfg.translation_lr_scale, state.view_live[:, None]),
    ]
    if not cfg.freeze_depths:
        groups.append(("z", "depth", grads.depth, cfg.depth_lr_scale, state.depth_live))

    t = state.step + 1
    for key, attr, g, scale, mask in groups:
        value = getattr(new, attr)
        if cfg.method == "gd":
            updated = value - lr * scale * g
        else:
            updated, moments = adam_update(value, g, new.moments[key], t, lr * scale, cfg)
            new.moments[key] = tuple(np.where(mask, mom, old) for mom, old in zip(moments, new.moments[key]))
        setattr(new, attr, np.where(mask, updated, value))
    new.step = t
    return new


class RunResult(NamedTuple):
    scene: Scene
    history: List[HistoryRow]
    unoptimized_views: List[int]


def run(
    scene: Scene,
    opt_cfg: OptimizerConfig = OptimizerConfig(),
    obj_cfg: ObjectiveConfig = ObjectiveConfig(),
    callback: Optional[Callable[[int, float, float], None]] = None,
    depth_init: Callable[[Scene, int], Scene] = init_depths,
) -> RunResult:
    """Run ``opt_cfg.steps`` updates and return the optimized scene.

    Missing depths are filled with ``depth_init(scene, opt_cfg.seed)`` first.
    The history holds one row per step (loss before that step's update) plus a
    final row with the loss after the last update. ``callback(step, lr, total)``
    is called once per row.

    NonFiniteLoss propagates with the partial history attached as
    ``err.history``.
    """
    if scene.has_poses and not scene.has_depths:
        scene = depth_init(scene, opt_cfg.seed)
    state = OptimizerState.from_scene(scene, obj_cfg)
    for _ in range(opt_cfg.steps):
        try:
            state = step(state, scene, opt_cfg, obj_cfg)
        except NonFiniteLoss as err:
            err.history = state.history
            raise
        if callback is not None:
            row = state.history[-1]
            callback(row.step, row.lr, row.total)

    report, _, _ = state.problem.evaluate(state.rot6d, state.translation, state.depth, state.lambda_2d, with_grad=False)
    final = HistoryRow(state.step, scheduled_lr(opt_cfg, state.step), report.total, report.term_3d, report.term_2d)
    state.history.append(final)
    if callback is not None:
        callback(final.step, final.lr, final.total)
    unoptimized = [int(i) for i in np.flatnonzero(~state.view_live)]
    return RunResult(state.to_scene(scene), state.history, unoptimized)
