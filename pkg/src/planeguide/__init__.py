"""Slice-in-volume plane localization and standard-plane guidance.

The package localizes a 2D grayscale image as an oriented plane inside a
3D reference volume, refines whole-scan pose sequences with a contrastive
objective over the motion itself, and turns any estimated pose into a
rigid move toward a predefined standard plane. Evaluation covers both the
motion level (KL divergence of rotation dynamics) and the image level
(Dice, NCC, MS-SSIM).

The import surface here stays light; the sklearn-style estimator wrapper
lives in :mod:`planeguide.estimators` and the HTTP service in
:mod:`planeguide.server`, both imported on demand.
"""

from .alignment import (
    ContrastiveConfig,
    OptimizerConfig,
    ScanSequence,
    contrastive_core,
    in_plane_loss,
    load_scan,
    out_of_plane_loss,
    refine_scan_poses,
    save_scan,
    scan_objective,
)
from .evaluation import (
    BenchmarkTable,
    EvaluationReport,
    TrajectoryConfig,
    evaluate_scan,
    random_plane_baseline,
    run_benchmark,
    simulate_scan,
)
from .geometry import (
    GuidanceInstruction,
    Pose,
    StandardPlaneDef,
    apply_guidance,
    geodesic_loss,
    quat_conjugate,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    random_unit_quaternions,
    rotation_angle_3d,
    slerp,
    to_axis_angle,
    to_rotation_matrix,
    transform_to_sp,
)
from .registration import (
    RegistrationConfig,
    RegistrationResult,
    register_scan,
    register_slice,
    super_fibonacci_quaternions,
)
from .similarity import (
    atlas_loss,
    dice_loss,
    kl_divergence,
    ms_ssim,
    ncc,
    pose_regression_loss,
    rotation_histogram,
)
from .volume import (
    DEFAULT_SLICE_SIZE,
    SliceImage,
    Volume,
    binarize,
    generate_phantom,
    load_standard_planes,
    load_volume,
    sample_points,
    sample_points_gradient,
    sample_slice,
    sample_slice_gradient,
    save_standard_planes,
    save_volume,
)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkTable",
    "ContrastiveConfig",
    "DEFAULT_SLICE_SIZE",
    "EvaluationReport",
    "GuidanceInstruction",
    "OptimizerConfig",
    "Pose",
    "RegistrationConfig",
    "RegistrationResult",
    "ScanSequence",
    "SliceImage",
    "StandardPlaneDef",
    "TrajectoryConfig",
    "Volume",
    "apply_guidance",
    "atlas_loss",
    "binarize",
    "contrastive_core",
    "dice_loss",
    "evaluate_scan",
    "generate_phantom",
    "geodesic_loss",
    "in_plane_loss",
    "kl_divergence",
    "load_scan",
    "load_standard_planes",
    "load_volume",
    "ms_ssim",
    "ncc",
    "out_of_plane_loss",
    "pose_regression_loss",
    "quat_conjugate",
    "quat_from_axis_angle",
    "quat_multiply",
    "quat_normalize",
    "random_plane_baseline",
    "random_unit_quaternions",
    "refine_scan_poses",
    "register_scan",
    "register_slice",
    "rotation_angle_3d",
    "rotation_histogram",
    "run_benchmark",
    "sample_points",
    "sample_points_gradient",
    "sample_slice",
    "sample_slice_gradient",
    "save_scan",
    "save_standard_planes",
    "save_volume",
    "scan_objective",
    "simulate_scan",
    "slerp",
    "super_fibonacci_quaternions",
    "to_axis_angle",
    "to_rotation_matrix",
    "transform_to_sp",
]
