"""
Handing cameras to a view-synthesis pipeline
============================================

Optimized scenes are saved as JSON and the cameras exported as a
``transforms.json`` file with OpenGL camera axes, the layout NeRF and
Gaussian Splatting tools read.
"""

# %%
import json
import tempfile
from pathlib import Path

import numpy as np

from kronc import io
from kronc.scenegen import SceneGenConfig, generate_scene

out = Path(tempfile.mkdtemp())
scene = generate_scene(SceneGenConfig(n_views=8, n_keypoints=12)).scene

# %%
io.save_scene(scene, out / "scene.json")
again = io.load_scene(out / "scene.json")
print("scene file round trip identical:", io.dumps_scene(again) == (out / "scene.json").read_text())

# %%
doc = io.export_cameras(scene)
io.check_export(doc)
io.save_json(doc, out / "transforms.json")
print("camera_angle_x = %.4f rad, %d frames" % (doc["camera_angle_x"], len(doc["frames"])))
print(json.dumps(doc["frames"][0], indent=1))

# %%
back = io.poses_from_export(io.load_json(out / "transforms.json"))
print("largest center change after re-import:",
      max(np.linalg.norm(a.translation - b.translation) for a, b in zip(back, scene.poses)))
