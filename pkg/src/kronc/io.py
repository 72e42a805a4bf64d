"""Scene files and NeRF-style camera export.

Scene file (JSON)::

    {"version": 1, "units": "m",
     "intrinsics": {"fx", "fy", "cx", "cy", "width", "height"},
     "keypoint_names": [...],
     "views": [{"id": ..., "pose": {"rot6d": [6], "translation": [3]} | null,
                "observations": {name: {"u", "v", "m", "z"?}}}]}

Absent observations (m == 0) are not written; ``z`` is omitted while depths
are uninitialised. Floats are written with Python's shortest round-trip repr,
so load -> save reproduces every value exactly.

The export file follows the ``transforms.json`` layout used by NeRF and
Gaussian Splatting tooling, whose camera axes are OpenGL-style (y up, z
backward); poses are converted on the way out and back in.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import KroncError
from .geom import CameraIntrinsics, CameraPose, Scene, is_rotation

SCENE_VERSION = 1
# OpenCV camera axes (x right, y down, z forward) <-> OpenGL (x right, y up, z back)
_CV_TO_GL = np.diag([1.0, -1.0, -1.0])


class SceneFormatError(KroncError, ValueError):
    pass


def _num(x) -> float:
    return float(x)


def scene_to_dict(scene: Scene) -> dict:
    intr = scene.intrinsics
    views = []
    for i in range(scene.n_views):
        pose = scene.poses[i]
        obs = {}
        for j, name in enumerate(scene.keypoint_names):
            if not scene.m[i, j] > 0:
                continue
            entry = {"u": _num(scene.uv[i, j, 0]), "v": _num(scene.uv[i, j, 1]), "m": _num(scene.m[i, j])}
            if not math.isnan(scene.z[i, j]):
                entry["z"] = _num(scene.z[i, j])
            obs[name] = entry
        views.append(
            {
                "id": scene.view_ids[i],
                "pose": None
                if pose is None
                else {"rot6d": [_num(x) for x in pose.rot6d], "translation": [_num(x) for x in pose.translation]},
                "observations": obs,
            }
        )
    return {
        "version": SCENE_VERSION,
        "units": scene.units,
        "intrinsics": {
            "fx": _num(intr.fx),
            "fy": _num(intr.fy),
            "cx": _num(intr.cx),
            "cy": _num(intr.cy),
            "width": intr.width,
            "height": intr.height,
        },
        "keypoint_names": list(scene.keypoint_names),
        "views": views,
    }


def scene_from_dict(doc: dict) -> Scene:
    try:
        version = doc["version"]
        if version != SCENE_VERSION:
            raise SceneFormatError(f"unsupported scene file version {version!r}")
        ki = doc["intrinsics"]
        intr = CameraIntrinsics(ki["fx"], ki["fy"], ki["cx"], ki["cy"], ki.get("width"), ki.get("height"))
        names = list(doc["keypoint_names"])
        index = {name: j for j, name in enumerate(names)}
        views = doc["views"]
        n, J = len(views), len(names)
        uv = np.full((n, J, 2), np.nan)
        m = np.zeros((n, J))
        z = np.full((n, J), np.nan)
        poses, ids = [], []
        for i, view in enumerate(views):
            ids.append(view["id"])
            p = view.get("pose")
            poses.append(None if p is None else CameraPose(p["rot6d"], p["translation"]))
            for name, ob in view.get("observations", {}).items():
                if name not in index:
                    raise SceneFormatError(f"view {view['id']!r} observes undeclared keypoint {name!r}")
                j = index[name]
                uv[i, j] = (ob["u"], ob["v"])
                m[i, j] = ob["m"]
                if ob.get("z") is not None:
                    z[i, j] = ob["z"]
    except (KeyError, TypeError) as err:
        raise SceneFormatError(f"malformed scene file: {err!r}") from err
    return Scene(intr, poses, uv, m, z, names, view_ids=ids, units=doc.get("units", "m"))


def dumps_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), indent=1) + "\n"


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(dumps_scene(scene))


def load_scene(path) -> Scene:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise SceneFormatError(f"{path}: not valid JSON ({err})") from err
    return scene_from_dict(doc)


# --------------------------------------------------------------------------
# camera export


def export_cameras(scene: Scene, image_dir: str = "images", image_ext: str = ".png") -> dict:
    """Build a ``transforms.json``-style document from the scene poses."""
    if not scene.has_poses:
        raise SceneFormatError("poses required")
    intr = scene.intrinsics
    if intr.width is None:
        raise SceneFormatError("image size required for export")
    frames = []
    for view_id, pose in zip(scene.view_ids, scene.poses):
        T = pose.as_matrix()
        T[:3, :3] = T[:3, :3] @ _CV_TO_GL
        frames.append({"file_path": f"{image_dir}/{view_id}{image_ext}", "transform_matrix": T.tolist()})
    return {
        "camera_angle_x": 2.0 * math.atan(intr.width / (2.0 * intr.fx)),
        "fl_x": float(intr.fx),
        "fl_y": float(intr.fy),
        "cx": float(intr.cx),
        "cy": float(intr.cy),
        "w": int(intr.width),
        "h": int(intr.height),
        "frames": frames,
    }


def check_export(doc: dict, tol: float = 1e-6) -> None:
    """Raise SceneFormatError unless every frame block is a rotation and the FOV matches."""
    expected = 2.0 * math.atan(doc["w"] / (2.0 * doc["fl_x"]))
    if abs(doc["camera_angle_x"] - expected) > 1e-12:
        raise SceneFormatError("camera_angle_x does not match w and fl_x")
    for frame in doc["frames"]:
        T = np.asarray(frame["transform_matrix"], dtype=float)
        if T.shape != (4, 4) or not is_rotation(T[:3, :3], tol):
            raise SceneFormatError(f"{frame['file_path']}: upper-left block is not a rotation")


def poses_from_export(doc: dict) -> list:
    out = []
    for frame in doc["frames"]:
        T = np.asarray(frame["transform_matrix"], dtype=float)
        R = T[:3, :3] @ _CV_TO_GL
        # Re-orthonormalize away JSON rounding before the strict rotation check.
        U, _, Vt = np.linalg.svd(R)
        out.append(CameraPose.from_matrix(U @ Vt, T[:3, 3]))
    return out


def save_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


HISTORY_COLUMNS = ("step", "lr", "total", "term_3d", "term_2d")


def write_history(rows: Iterable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in rows:
            writer.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def read_history(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != HISTORY_COLUMNS:
            raise SceneFormatError(f"unexpected history header {header}")
        return [(int(r[0]), *(float(x) for x in r[1:])) for r in reader]
