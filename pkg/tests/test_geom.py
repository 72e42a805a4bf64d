import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from kronc.errors import DegenerateRotation, InvalidConfig, NotARotation
from kronc.geom import (
    CameraIntrinsics,
    CameraPose,
    Scene,
    back_project,
    matrix_to_rot6d,
    rot6d_backward,
    rot6d_to_matrix,
    rot6d_to_matrix_batch,
    world_to_image,
)

UNIT = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
HUNDRED = CameraIntrinsics(100.0, 100.0, 50.0, 50.0)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_rot6d_identity():
    np.testing.assert_array_equal(rot6d_to_matrix([1, 0, 0, 0, 1, 0]), np.eye(3))


def test_rot6d_hand_gram_schmidt():
    # b1 = (1,0,0); a2 - (b1.a2) b1 = (0,1,0); b3 = (0,0,1)
    np.testing.assert_allclose(rot6d_to_matrix([2, 0, 0, 1, 1, 0]), np.eye(3), atol=1e-15)


@pytest.mark.parametrize("r", [[1, 0, 0, 1, 0, 0], [0, 0, 0, 0, 1, 0], [1, 2, 3, -2, -4, -6]])
def test_rot6d_degenerate(r):
    with pytest.raises(DegenerateRotation):
        rot6d_to_matrix(r)


def test_matrix_to_rot6d_examples():
    np.testing.assert_array_equal(matrix_to_rot6d(np.eye(3)), [1, 0, 0, 0, 1, 0])
    rz90 = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])
    np.testing.assert_array_equal(matrix_to_rot6d(rz90), [0, 1, 0, -1, 0, 0])


def test_matrix_to_rot6d_rejects():
    with pytest.raises(NotARotation):
        matrix_to_rot6d(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(NotARotation):
        matrix_to_rot6d(2 * np.eye(3))


def test_random_round_trip():
    for R in Rotation.random(200, random_state=3).as_matrix():
        assert np.linalg.norm(rot6d_to_matrix(matrix_to_rot6d(R)) - R) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=6, max_size=6), st.floats(1e-3, 1e3))
def test_orthonormal_and_scale_invariant(r, alpha):
    r = np.array(r)
    a1, a2 = r[:3], r[3:]
    if np.linalg.norm(a1) < 1e-3 or np.linalg.norm(np.cross(a1, a2)) < 1e-3 * np.linalg.norm(a1):
        return
    M = rot6d_to_matrix(r)
    assert np.linalg.norm(M.T @ M - np.eye(3)) < 1e-12
    assert abs(np.linalg.det(M) - 1) < 1e-12
    assert np.linalg.norm(rot6d_to_matrix(alpha * r) - M) < 1e-12
    # one normalization pass makes the 6D vector a fixed point
    r1 = matrix_to_rot6d(M)
    np.testing.assert_allclose(matrix_to_rot6d(rot6d_to_matrix(r1)), r1, atol=1e-15)


def test_rot6d_backward_matches_finite_differences():
    rng = np.random.default_rng(0)
    r = rng.normal(size=(4, 6))
    G = rng.normal(size=(4, 3, 3))
    analytic = rot6d_backward(r, G)
    h = 1e-6
    for n in range(4):
        for k in range(6):
            rp, rm = r.copy(), r.copy()
            rp[n, k] += h
            rm[n, k] -= h
            fd = np.sum(G * (rot6d_to_matrix_batch(rp) - rot6d_to_matrix_batch(rm))) / (2 * h)
            assert abs(fd - analytic[n, k]) < 1e-7


def test_back_project_examples():
    np.testing.assert_array_equal(back_project(UNIT, CameraPose.identity(), 0, 0, 2), [0, 0, 2])
    shifted = CameraPose([1, 0, 0, 0, 1, 0], [1, 0, 0])
    np.testing.assert_array_equal(back_project(UNIT, shifted, 0, 0, 2), [1, 0, 2])
    # K^-1 (150, 50, 1) = (1, 0, 1)
    np.testing.assert_allclose(back_project(HUNDRED, CameraPose.identity(), 150, 50, 1), [1, 0, 1])


def test_back_project_rejects_nonpositive_depth():
    with pytest.raises(ValueError):
        back_project(UNIT, CameraPose.identity(), 0, 0, 0.0)


def test_world_to_image_examples():
    p = world_to_image(UNIT, CameraPose.identity(), [0, 0, 2])
    assert (p.u, p.v, p.z_cam) == (0, 0, 2) and not p.behind_camera
    p = world_to_image(HUNDRED, CameraPose.identity(), back_project(HUNDRED, CameraPose.identity(), 150, 50, 1))
    assert p.u == pytest.approx(150) and p.v == pytest.approx(50) and p.z_cam == pytest.approx(1)
    assert world_to_image(UNIT, CameraPose.identity(), [0, 0, -1]).behind_camera


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0, 640), st.floats(0, 480), st.floats(0.05, 50),
    st.integers(0, 2**31 - 1),
)
def test_projective_inverse_pair(u, v, z, seed):
    intr = CameraIntrinsics(500.0, 480.0, 320.0, 240.0, 640, 480)
    R = Rotation.random(random_state=seed).as_matrix()
    pose = CameraPose.from_matrix(R, np.random.default_rng(seed).normal(size=3) * 5)
    P = back_project(intr, pose, u, v, z)
    proj = world_to_image(intr, pose, P)
    assert abs(proj.u - u) < 1e-9 and abs(proj.v - v) < 1e-9 and abs(proj.z_cam - z) < 1e-9


def test_back_project_linear_in_depth():
    pose = CameraPose.from_matrix(Rotation.from_euler("xyz", [10, -20, 30], degrees=True).as_matrix(), [1, 2, 3])
    pts = np.stack([back_project(HUNDRED, pose, 70, 20, z) for z in (0.5, 1.7, 4.2)])
    np.testing.assert_allclose(pts[0], pose.translation + 0.5 * (pts[1] - pose.translation) / 1.7, atol=1e-12)
    # three-point collinearity
    assert np.linalg.norm(np.cross(pts[1] - pts[0], pts[2] - pts[0])) < 1e-9


def test_intrinsics_invariants():
    with pytest.raises(InvalidConfig):
        CameraIntrinsics(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(InvalidConfig):
        CameraIntrinsics(1.0, 1.0, 700.0, 240.0, 640, 480)
    np.testing.assert_allclose(HUNDRED.K @ HUNDRED.K_inv, np.eye(3))


def test_scene_invariants():
    intr = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
    poses = [CameraPose.identity()] * 2
    with pytest.raises(InvalidConfig):
        Scene(intr, poses[:1], np.zeros((1, 1, 2)), np.ones((1, 1)), np.ones((1, 1)), ["a"])
    with pytest.raises(InvalidConfig):
        Scene(intr, poses, np.zeros((2, 1, 2)), np.full((2, 1), 1.5), np.ones((2, 1)), ["a"])
    s = Scene(intr, poses, np.zeros((2, 1, 2)), np.array([[1.0], [0.0]]), np.ones((2, 1)), ["a"])
    assert s.observation(1, 0) is None
    assert s.observation(0, 0).m == 1.0
