"""Rotated-box detection toolkit.

Geometry and codecs for rotated bounding boxes, periodic angle losses with
analytic gradients, rotated NMS, AP50 evaluation, a seeded synthetic scene
generator, and gradient-descent demos of the periodic loss's convergence
behavior.
"""

from ._kernels import NUMBA_ENABLED, active_backend
from .geometry import (
    ConvexQuad,
    InvalidBoxError,
    RotatedBox,
    canonicalize,
    corners,
    hflip_box,
    intersect_area,
    iou,
    iou_matrix,
    iou_monte_carlo,
    radius_aligned_angle,
    rotate_box,
)
from .codec import (
    AnchorSet,
    CodecParams,
    ConfigError,
    DetectorConfig,
    GridSpec,
    OutOfBoundsError,
    RawPredictions,
    decode,
    decode_all,
    default_anchors,
    default_config,
    encode_angle,
    encode_targets,
    load_detector_config,
)
from .losses import (
    AngleLossKind,
    Assignment,
    LossBreakdown,
    angle_loss,
    angle_loss_grad,
    assign,
    total_loss,
)
from .postprocess import Detection, NmsConfig, confidence_filter, nms
from .evaluation import (
    AspectHistogram,
    EvalReport,
    FrameEval,
    aspect_ratio_histogram,
    average_precision,
    evaluate,
    fixed_threshold_metrics,
    match_frame,
    pr_curve,
)
from .dataio import (
    AnnotationFormatError,
    AnnotationSet,
    CorruptionConfig,
    PredictionSet,
    SynthConfig,
    generate_scene,
    load_annotations,
    load_predictions,
    save_annotations,
    save_predictions,
)
from .trainer import (
    AblationReport,
    FitConfig,
    Trajectory,
    angle_error_mod_pi,
    finite_diff_check,
    fit,
    synthetic_ablation,
)

__version__ = "0.1.0"
