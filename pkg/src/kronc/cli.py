"""``kronc`` command line: synth -> perturb -> optimize -> eval -> export.

Exit codes: 0 ok, 1 I/O or file-format failure, 2 invalid arguments,
3 nothing to optimize / poses required, 4 non-finite loss.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import InvalidConfig, KroncError, NoConstraints, NonFiniteLoss
from .evaluation import PerturbConfig, perturb_poses, pose_errors
from .objective import ObjectiveConfig
from .optimizer import PROFILES, OptimizerConfig, init_depths, run
from .scenegen import VISIBILITY_POLICIES, SceneGenConfig, circular_prior, generate_scene

THREADS_ENV = "KRONC_THREADS"


class CommandError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _load(path):
    try:
        return io.load_scene(path)
    except OSError as err:
        raise CommandError(1, f"cannot read {path}: {err.strerror or err}") from err
    except (KroncError, ValueError) as err:
        raise CommandError(1, f"{path}: {err}") from err


def _write(fn, *args):
    try:
        fn(*args)
    except OSError as err:
        raise CommandError(1, f"cannot write {args[-1]}: {err.strerror or err}") from err


def _thread_limit(threads):
    """Cap native (BLAS/OpenMP) thread pools for the duration of a command."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else None
    if threads is None:
        return contextlib.nullcontext()
    if threads < 1:
        raise CommandError(2, "--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def cmd_synth(args):
    try:
        cfg = SceneGenConfig(
            n_views=args.views,
            n_keypoints=args.keypoints,
            radius=args.radius,
            camera_height=args.height,
            visibility=args.visibility,
            dropout_p=args.dropout,
            seed=args.seed,
        )
    except InvalidConfig as err:
        raise CommandError(2, str(err)) from err
    gt = generate_scene(cfg)
    _write(io.save_scene, gt.scene, args.output)
    if args.gt:
        _write(io.save_scene, gt.scene, args.gt)
    print(f"wrote {cfg.n_views} views x {cfg.n_keypoints} keypoints "
          f"({int(gt.scene.m.sum())} observations) to {args.output}")


def cmd_perturb(args):
    scene = _load(args.input)
    if not scene.has_poses:
        raise CommandError(3, "poses required")
    try:
        cfg = PerturbConfig(args.sigma_rot, args.sigma_trans, args.seed)
    except InvalidConfig as err:
        raise CommandError(2, str(err)) from err
    noisy = perturb_poses(scene.poses, cfg)
    z = scene.z if args.keep_depths else np.full_like(scene.z, np.nan)
    _write(io.save_scene, scene.replace(poses=noisy, z=z), args.output)


def cmd_optimize(args):
    scene = _load(args.input)
    if args.init_trajectory == "circular":
        scene = scene.replace(poses=circular_prior(scene.n_views, args.radius, args.height))
        if not args.keep_depths:
            scene = scene.replace(z=np.full_like(scene.z, np.nan))
    elif not scene.has_poses:
        raise CommandError(2, "scene has views without poses; pass --init-trajectory circular")
    lr = PROFILES[args.profile] if args.lr is None else args.lr
    try:
        opt_cfg = OptimizerConfig(
            steps=args.steps, learning_rate=lr, seed=args.seed, freeze_depths=args.freeze_depths
        )
        obj_cfg = ObjectiveConfig(lambda_2d=args.lambda_2d)
    except InvalidConfig as err:
        raise CommandError(2, str(err)) from err
    if not scene.has_depths:
        scene = init_depths(scene, args.seed)

    history = args.history or str(Path(args.output).with_suffix("")) + "_history.csv"
    try:
        result = run(scene, opt_cfg, obj_cfg)
    except NoConstraints as err:
        raise CommandError(3, str(err)) from err
    except NonFiniteLoss as err:
        _write(io.write_history, getattr(err, "history", []), history)
        raise CommandError(4, str(err)) from err
    _write(io.save_scene, result.scene, args.output)
    _write(io.write_history, result.history, history)
    first, last = result.history[0].total, result.history[-1].total
    n_opt = scene.n_views - len(result.unoptimized_views)
    print(f"loss {first:.6g} -> {last:.6g} after {opt_cfg.steps} steps")
    print(f"optimized cameras: {n_opt}/{scene.n_views} (unoptimized: {len(result.unoptimized_views)})")


def cmd_eval(args):
    est, ref = _load(args.estimated), _load(args.reference)
    if not (est.has_poses and ref.has_poses):
        raise CommandError(3, "poses required")
    if est.n_views != ref.n_views:
        raise CommandError(2, f"view count mismatch: {est.n_views} vs {ref.n_views}")
    try:
        report = pose_errors(est.poses, ref.poses, units=ref.units)
    except KroncError as err:
        raise CommandError(3, str(err)) from err
    print(report.summary())
    if args.json:
        _write(io.save_json, report.as_dict(), args.json)


def cmd_export(args):
    scene = _load(args.input)
    if not scene.has_poses:
        raise CommandError(3, "poses required")
    try:
        doc = io.export_cameras(scene)
    except io.SceneFormatError as err:
        raise CommandError(3, str(err)) from err
    _write(io.save_json, doc, args.output)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kronc", description="Keypoint-based camera pose registration.")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"cap native thread pools (default: ${THREADS_ENV} or library default)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene with exact ground truth")
    p.add_argument("--views", type=int, default=80)
    p.add_argument("--keypoints", type=int, default=66)
    p.add_argument("--radius", type=float, default=4.0)
    p.add_argument("--height", type=float, default=0.5)
    p.add_argument("--visibility", choices=VISIBILITY_POLICIES, default="front-facing-normal")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--gt", help="also write a ground-truth copy here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("perturb", help="add right-multiplied pose noise")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--sigma-rot", type=float, default=4.0, help="degrees")
    p.add_argument("--sigma-trans", type=float, default=0.5, help="scene units")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-depths", action="store_true")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("optimize", help="jointly optimize poses and keypoint depths")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--history", help="loss-history CSV (default: <output>_history.csv)")
    p.add_argument("--profile", choices=sorted(PROFILES), default="synthetic")
    p.add_argument("--lr", type=float, default=None, help="overrides the profile learning rate")
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--lambda", dest="lambda_2d", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--freeze-depths", action="store_true")
    p.add_argument("--init-trajectory", choices=["circular"], default=None)
    p.add_argument("--radius", type=float, default=4.0)
    p.add_argument("--height", type=float, default=0.0)
    p.add_argument("--keep-depths", action="store_true",
                   help="with --init-trajectory, keep the input depths instead of re-drawing them")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("eval", help="rotation/translation errors after similarity alignment")
    p.add_argument("estimated")
    p.add_argument("reference")
    p.add_argument("--json", help="also write the full report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="write a transforms.json camera file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit(args.threads):
            args.func(args)
    except CommandError as err:
        print(f"kronc {args.command}: {err}", file=sys.stderr)
        return err.code
    except ValueError as err:
        print(f"kronc {args.command}: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
