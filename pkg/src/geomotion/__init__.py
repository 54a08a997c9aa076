"""World-frame point maps and scene flows: preprocessing, losses, evaluation."""

from .core import (
    CameraIntrinsics,
    CameraPose,
    NormParams,
    PointMap,
    SceneFlow,
    SequenceSample,
    validate_sequence,
)
from .flowops import apply_deformability, deform, flow_to_world
from .geomath import (
    DepthMap,
    NormalMap,
    cam_to_world_points,
    compute_normals,
    normalize_poses,
    project_depth,
    pyramid_pad,
)
from .losses import (
    LossResult,
    LossWeights,
    depth_l1_loss,
    geometry_loss,
    gradcheck,
    motion_loss,
    normal_loss,
    patch_depth_loss,
    point_loss,
)
from .metrics import AlignParams, MetricsReport, apd, delta_p, epe, evaluate_sequence, rel_p, solve_scale_shift
from .normalize import canonical_denormalize, canonical_normalize, max_normalize
from .pipeline import preprocess

__version__ = "0.1.0"
