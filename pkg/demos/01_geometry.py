"""
Cameras, pixels and depths
==========================

A keypoint pixel plus a depth along its viewing ray pins down a 3D point.
Poses are stored camera-to-world, so a pose's translation is the camera
center. Rotations are carried as 6 unconstrained numbers (the first two
matrix columns) and turned back into a rotation by Gram-Schmidt.
"""

# %%
import numpy as np

from kronc.geom import CameraIntrinsics, CameraPose, back_project, matrix_to_rot6d, rot6d_to_matrix, world_to_image

intr = CameraIntrinsics(fx=400.0, fy=400.0, cx=320.0, cy=240.0, width=640, height=480)

# %% [markdown]
# Any pair of non-parallel 3-vectors gives a valid rotation, whatever their length.

# %%
r = np.array([2.0, 0.1, 0.0, 0.3, 5.0, 0.2])
R = rot6d_to_matrix(r)
print("R^T R =\n", np.round(R.T @ R, 12))
print("det R =", np.linalg.det(R))
print("scaled input gives the same matrix:", np.allclose(rot6d_to_matrix(10 * r), R))
print("canonical 6D vector:", matrix_to_rot6d(R))

# %% [markdown]
# Lift a pixel to 3D and project it back.

# %%
pose = CameraPose(r, translation=[1.0, -2.0, 0.5])
P = back_project(intr, pose, u=400.0, v=200.0, z=3.0)
proj = world_to_image(intr, pose, P)
print("world point:", P)
print("re-projected pixel:", (proj.u, proj.v), "camera depth:", proj.z_cam)

# %% [markdown]
# Points along one ray stay on one line; only the depth moves them.

# %%
pts = np.stack([back_project(intr, pose, 400.0, 200.0, z) for z in (1.0, 2.0, 4.0)])
print("distance from camera center:", np.linalg.norm(pts - pose.center, axis=1))
