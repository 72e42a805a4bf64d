"""Camera pose registration by clustering back-projected semantic keypoints."""

from .errors import (
    DegenerateConfiguration,
    DegenerateRotation,
    InactiveKeypoint,
    InvalidConfig,
    KroncError,
    NoConstraints,
    NonFiniteLoss,
    NotARotation,
    ZeroScale,
)
from .evaluation import (
    EvalReport,
    PerturbConfig,
    SimilarityTransform,
    perturb_poses,
    pose_errors,
    umeyama_align,
)
from .geom import (
    CameraIntrinsics,
    CameraPose,
    KeypointObservation,
    Scene,
    back_project,
    matrix_to_rot6d,
    rot6d_to_matrix,
    world_to_image,
)
from .objective import (
    CentroidSet,
    LossReport,
    ObjectiveConfig,
    compute_centroids,
    gradients,
    observation_loss,
    total_loss,
)
from .optimizer import OptimizerConfig, OptimizerState, init_depths, run, step
from .scenegen import GroundTruthScene, SceneGenConfig, circular_prior, generate_scene

__version__ = "0.1.0"
