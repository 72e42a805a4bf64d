"""
Starting from a circle
======================

Without any pose estimate, cameras are initialised evenly on a horizontal
circle, looking at the circle's axis. Here the true cameras sit 0.5 m higher,
tilt down toward the object, and start 30 degrees around the ring from where
the prior puts them. The keypoints are enough to pull them into place.
"""

# %% parameters
steps = 10000
seed = 0

# %%
import numpy as np

from kronc.evaluation import PerturbConfig, perturb_poses, pose_errors
from kronc.optimizer import OptimizerConfig, run
from kronc.scenegen import SceneGenConfig, circular_prior, generate_scene

gt = generate_scene(SceneGenConfig(seed=seed))
prior = circular_prior(gt.scene.n_views, radius=4.0, height=0.0, phase=np.deg2rad(30.0))
prior = perturb_poses(prior, PerturbConfig(5.0, 0.5, seed=seed + 1))
print("prior:    ", pose_errors(prior, gt.gt_poses).summary())

# %%
start = gt.scene.replace(poses=prior, z=np.full_like(gt.scene.z, np.nan))
result = run(start, OptimizerConfig.profile("real", steps=steps, seed=seed))
print("optimized:", pose_errors(result.scene.poses, gt.gt_poses).summary())
