import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from kronc.geom import CameraIntrinsics, CameraPose, Scene


def random_rotations(n, seed):
    return Rotation.random(n, random_state=seed).as_matrix()


def random_unit_scene(n_views=5, n_kp=4, seed=0, lambda_visible=0.85, jitter=0.1):
    """Small scene with unit-order coordinates and noisy (unnormalized) 6D rotations."""
    rng = np.random.default_rng(seed)
    Rs = random_rotations(n_views, seed)
    poses = [CameraPose(np.concatenate([R[:, 0], R[:, 1]]) + jitter * rng.normal(size=6), rng.normal(size=3))
             for R in Rs]
    m = (rng.uniform(size=(n_views, n_kp)) < lambda_visible).astype(float)
    # keep every keypoint seen at least twice
    m[:2, :] = 1.0
    uv = rng.uniform(-1, 1, size=(n_views, n_kp, 2))
    z = rng.uniform(0.5, 2.0, size=(n_views, n_kp))
    intr = CameraIntrinsics(1.2, 0.9, 0.05, -0.1)
    return Scene(intr, poses, uv, m, np.where(m > 0, z, np.nan), [f"k{j}" for j in range(n_kp)])


def finite_difference_gradients(loss_fn, scene, h=1e-5):
    """Central differences of ``loss_fn(scene)`` w.r.t. every 6D, translation and depth entry."""
    r = scene.rot6d_array()
    t = scene.translation_array()
    z = scene.z.copy()

    def f(r_, t_, z_):
        return loss_fn(scene.with_params(r_, t_, z_))

    out = []
    for arr in (r, t, z):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            if np.isnan(arr[idx]):
                continue
            old = arr[idx]
            arr[idx] = old + h
            fp = f(r, t, z)
            arr[idx] = old - h
            fm = f(r, t, z)
            arr[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        out.append(g)
    return tuple(out)


@pytest.fixture
def unit_scene():
    return random_unit_scene()


# --------------------------------------------------------------------------
# acceptance report: one PASS/FAIL line per criterion, printed at the end

ACCEPTANCE_RESULTS = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> bool:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_RESULTS[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[number])
