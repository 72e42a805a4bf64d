import json
import math

import numpy as np
import pytest

from conftest import random_unit_scene
from kronc import cli, io
from kronc.evaluation import pose_errors
from kronc.geom import CameraPose, Scene
from kronc.scenegen import SceneGenConfig, generate_scene


def scenes_equal(a: Scene, b: Scene):
    assert a.intrinsics == b.intrinsics
    assert a.keypoint_names == b.keypoint_names and a.view_ids == b.view_ids and a.units == b.units
    np.testing.assert_array_equal(a.m, b.m)
    np.testing.assert_array_equal(a.z, b.z)  # NaN positions must match too
    vis = a.m > 0
    np.testing.assert_array_equal(a.uv[vis], b.uv[vis])
    for p, q in zip(a.poses, b.poses):
        if p is None:
            assert q is None
        else:
            np.testing.assert_array_equal(p.rot6d, q.rot6d)
            np.testing.assert_array_equal(p.translation, q.translation)


@pytest.fixture
def gt_scene():
    return generate_scene(SceneGenConfig(n_views=8, n_keypoints=10, seed=3)).scene


def test_scene_round_trip_is_value_identical(tmp_path, gt_scene):
    scene = gt_scene.replace()
    scene.m[0, 0] = 0.5  # fractional weight
    scene.z[1, :] = np.nan  # a view with uninitialised depths
    path = tmp_path / "scene.json"
    io.save_scene(scene, path)
    loaded = io.load_scene(path)
    scenes_equal(scene, loaded)
    assert io.dumps_scene(loaded) == path.read_text()


def test_scene_round_trip_unnormalised_rotations_and_null_pose(tmp_path):
    scene = random_unit_scene(seed=4)
    poses = list(scene.poses)
    poses[2] = None
    scene = scene.replace(poses=poses)
    doc = json.loads(io.dumps_scene(scene))
    assert doc["views"][2]["pose"] is None
    assert "z" in doc["views"][0]["observations"]["k0"]
    scenes_equal(scene, io.scene_from_dict(doc))


def test_scene_file_layout(gt_scene):
    doc = io.scene_to_dict(gt_scene)
    assert doc["version"] == 1 and doc["units"] == "m"
    assert set(doc["intrinsics"]) == {"fx", "fy", "cx", "cy", "width", "height"}
    view = doc["views"][0]
    assert set(view) == {"id", "pose", "observations"}
    assert len(view["pose"]["rot6d"]) == 6 and len(view["pose"]["translation"]) == 3
    # absent observations are not written
    assert len(view["observations"]) == int(gt_scene.m[0].sum())


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d.update(version=2), "version"),
        (lambda d: d["views"][0]["observations"].update(ghost={"u": 0, "v": 0, "m": 1}), "undeclared"),
        (lambda d: d.pop("intrinsics"), "malformed"),
    ],
)
def test_scene_format_errors(gt_scene, mutate, message):
    doc = io.scene_to_dict(gt_scene)
    mutate(doc)
    with pytest.raises(io.SceneFormatError, match=message):
        io.scene_from_dict(doc)


def test_export_invariants_and_round_trip(gt_scene):
    doc = io.export_cameras(gt_scene)
    io.check_export(doc)
    assert doc["camera_angle_x"] == 2 * math.atan(doc["w"] / (2 * doc["fl_x"]))
    assert len(doc["frames"]) == gt_scene.n_views
    assert doc["frames"][0]["file_path"] == "images/view_000.png"
    for pose, back in zip(gt_scene.poses, io.poses_from_export(json.loads(json.dumps(doc)))):
        np.testing.assert_allclose(back.translation, pose.translation, atol=1e-9)
        np.testing.assert_allclose(back.rotation, pose.rotation, atol=1e-12)


def test_export_uses_opengl_axes():
    scene = random_unit_scene(seed=0)
    from kronc.geom import CameraIntrinsics

    intr = CameraIntrinsics(100.0, 100.0, 50.0, 40.0, 100, 80)
    poses = [CameraPose.identity()] * scene.n_views
    doc = io.export_cameras(scene.replace(intrinsics=intr, poses=poses))
    T = np.array(doc["frames"][0]["transform_matrix"])
    # an OpenCV camera looking down +z becomes an OpenGL camera whose back axis is -z
    np.testing.assert_array_equal(T[:3, :3], np.diag([1.0, -1.0, -1.0]))
    np.testing.assert_array_equal(T[3], [0, 0, 0, 1])


def test_export_requires_poses(gt_scene):
    poses = list(gt_scene.poses)
    poses[0] = None
    with pytest.raises(io.SceneFormatError, match="poses required"):
        io.export_cameras(gt_scene.replace(poses=poses))


def test_check_export_rejects_bad_documents(gt_scene):
    doc = io.export_cameras(gt_scene)
    doc["frames"][1]["transform_matrix"][0][0] *= 1.01
    with pytest.raises(io.SceneFormatError):
        io.check_export(doc)
    doc = io.export_cameras(gt_scene)
    doc["camera_angle_x"] += 1e-3
    with pytest.raises(io.SceneFormatError):
        io.check_export(doc)


def test_history_round_trip(tmp_path):
    rows = [(0, 0.01, 1.0 / 3.0, 0.25, 1e-17), (1, 0.009999, 0.2, 0.1, 0.3)]
    io.write_history(rows, tmp_path / "h.csv")
    assert io.read_history(tmp_path / "h.csv") == rows
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "step,lr,total,term_3d,term_2d"


# --------------------------------------------------------------------------
# command line


def kronc(*args):
    return cli.main([str(a) for a in args])


def test_cli_pipeline(tmp_path, capsys):
    scene, gt = tmp_path / "scene.json", tmp_path / "gt.json"
    assert kronc("synth", "--views", 12, "--keypoints", 40, "--seed", 7, "-o", scene, "--gt", gt) == 0
    assert scene.read_text() == gt.read_text()
    noisy = tmp_path / "noisy.json"
    assert kronc("perturb", scene, "-o", noisy, "--sigma-rot", 2, "--sigma-trans", 0.2, "--seed", 1) == 0
    assert not io.load_scene(noisy).has_depths
    out, hist = tmp_path / "opt.json", tmp_path / "hist.csv"
    assert kronc("optimize", noisy, "-o", out, "--steps", 300, "--history", hist) == 0
    printed = capsys.readouterr().out
    assert "optimized cameras: 12/12" in printed
    rows = io.read_history(hist)
    assert len(rows) == 301 and rows[-1][2] < rows[0][2]
    report = tmp_path / "report.json"
    assert kronc("eval", out, gt, "--json", report) == 0
    assert "eps_R" in capsys.readouterr().out
    doc = json.loads(report.read_text())
    before = pose_errors(io.load_scene(noisy).poses, io.load_scene(gt).poses)
    assert doc["eps_trans"] < before.eps_trans
    cams = tmp_path / "cams.json"
    assert kronc("export", out, "-o", cams) == 0
    io.check_export(io.load_json(cams))


def test_cli_synth_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert kronc("synth", "--views", 80, "--keypoints", 66, "--radius", 4, "--seed", 7, "-o", a) == 0
    assert kronc("synth", "--views", 80, "--keypoints", 66, "--radius", 4, "--seed", 7, "-o", b) == 0
    assert a.read_bytes() == b.read_bytes()
    loaded = io.load_scene(a)
    from kronc.objective import total_loss

    assert total_loss(loaded).total < 1e-12


def test_cli_synth_invalid_views(tmp_path, capsys):
    assert kronc("synth", "--views", 1, "-o", tmp_path / "x.json") == 2
    assert "n_views must be ≥ 2" in capsys.readouterr().err


def test_cli_perturb_zero_noise(tmp_path):
    scene, out = tmp_path / "s.json", tmp_path / "p.json"
    kronc("synth", "--views", 6, "--keypoints", 5, "-o", scene)
    assert kronc("perturb", scene, "-o", out, "--sigma-rot", 0, "--sigma-trans", 0, "--keep-depths") == 0
    a, b = io.load_scene(scene), io.load_scene(out)
    rep = pose_errors(b.poses, a.poses)
    assert rep.eps_rot < 1e-6 and rep.eps_trans < 1e-12
    np.testing.assert_array_equal(a.z, b.z)


def test_cli_perturb_matches_noise_level(tmp_path, capsys):
    scene, out = tmp_path / "s.json", tmp_path / "p.json"
    kronc("synth", "-o", scene)
    kronc("perturb", scene, "-o", out, "--sigma-rot", 4, "--sigma-trans", 0)
    capsys.readouterr()
    assert kronc("eval", out, scene) == 0
    eps_rot = float(capsys.readouterr().out.split("eps_R = ")[1].split()[0])
    assert abs(eps_rot - 4 * math.sqrt(2 / math.pi)) < 0.15 * 4 * math.sqrt(2 / math.pi)


def test_cli_missing_input(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert kronc("perturb", missing, "-o", tmp_path / "x.json") == 1
    assert str(missing) in capsys.readouterr().err


def test_cli_optimize_errors(tmp_path, capsys):
    scene = tmp_path / "s.json"
    kronc("synth", "--views", 6, "--keypoints", 5, "-o", scene)
    assert kronc("optimize", scene, "-o", tmp_path / "o.json", "--steps", 0) == 2
    # nothing observed twice
    empty = tmp_path / "empty.json"
    kronc("synth", "--views", 6, "--keypoints", 5, "--visibility", "random-dropout", "--dropout", 1, "-o", empty)
    assert kronc("optimize", empty, "-o", tmp_path / "o.json", "--steps", 5) == 3
    # a runaway learning rate overflows: exit 4 with the partial history flushed
    hist = tmp_path / "h.csv"
    noisy = tmp_path / "n.json"
    kronc("perturb", scene, "-o", noisy)
    assert kronc("optimize", noisy, "-o", tmp_path / "o.json", "--lr", 1e300, "--steps", 50, "--history", hist) == 4
    assert len(io.read_history(hist)) >= 1
    assert "non-finite" in capsys.readouterr().err


def test_cli_optimize_freeze_depths(tmp_path):
    scene, out = tmp_path / "s.json", tmp_path / "o.json"
    kronc("synth", "--views", 8, "--keypoints", 8, "-o", scene)
    noisy = tmp_path / "n.json"
    kronc("perturb", scene, "-o", noisy, "--keep-depths")
    assert kronc("optimize", noisy, "-o", out, "--steps", 20, "--freeze-depths") == 0
    np.testing.assert_array_equal(io.load_scene(noisy).z, io.load_scene(out).z)


def test_cli_optimize_without_poses(tmp_path):
    src = tmp_path / "s.json"
    kronc("synth", "--views", 10, "--keypoints", 12, "--height", 0, "-o", src)
    doc = json.loads(src.read_text())
    for view in doc["views"]:
        view["pose"] = None
    blank = tmp_path / "blank.json"
    blank.write_text(json.dumps(doc))
    out = tmp_path / "o.json"
    assert kronc("optimize", blank, "-o", out, "--steps", 5) == 2
    assert kronc("optimize", blank, "-o", out, "--steps", 50, "--init-trajectory", "circular",
                 "--radius", 4, "--profile", "real") == 0
    assert io.load_scene(out).has_poses
    assert kronc("export", blank, "-o", tmp_path / "c.json") == 3


def test_cli_eval_mismatch_and_identity(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    kronc("synth", "--views", 6, "--keypoints", 5, "-o", a)
    kronc("synth", "--views", 7, "--keypoints", 5, "-o", b)
    assert kronc("eval", a, b) == 2
    capsys.readouterr()
    assert kronc("eval", a, a) == 0
    assert "eps_R = 0.000 deg, eps_t = 0.000" in capsys.readouterr().out


def test_cli_threads(tmp_path, monkeypatch):
    scene = tmp_path / "s.json"
    assert kronc("--threads", 1, "synth", "--views", 4, "--keypoints", 3, "-o", scene) == 0
    assert kronc("--threads", 0, "synth", "--views", 4, "--keypoints", 3, "-o", scene) == 2
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    assert kronc("synth", "--views", 4, "--keypoints", 3, "-o", scene) == 0
