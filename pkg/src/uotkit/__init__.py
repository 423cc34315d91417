"""Underwater single-object tracking evaluation toolkit.

Box geometry, dataset/result file I/O, the 23-attribute rules, the five
tracking metrics with frame-rate stability, Kalman-filter match
processing over response maps, and distillation loss kernels with
verified gradients.
"""

from .attributes import AttributeSet, auto_attributes, full_attributes, merge_attributes
from .dataset import (
    DatasetStats,
    SequenceAnnotation,
    TrackerResult,
    dataset_stats,
    load_manifest,
    load_results,
    load_sequence,
    validate_dataset,
    write_sequence,
)
from .distill import (
    LossBatch,
    ckd_loss,
    fkd_loss,
    grad_check,
    rkd_loss,
    skd_loss,
    total_loss,
    tracking_losses,
)
from .errors import (
    DatasetError,
    DegenerateBoxError,
    DistillError,
    EvaluationError,
    GeometryError,
    InternalError,
    MatpError,
    MissingResultError,
    ParseError,
    SchemaError,
    UotkitError,
)
from .geometry import (
    BoundingBox,
    center_error,
    complete_iou,
    giou,
    iou,
    normalized_center_error,
)
from .matp import (
    Candidate,
    KalmanState,
    MatpParams,
    ResponseMap,
    extract_candidates,
    kf_init,
    kf_predict,
    kf_update,
    location_scores,
    matp_run,
    matp_run_arrays,
    matp_step,
    nms,
    read_response_container,
    write_response_container,
)
from .metrics import (
    EvaluationReport,
    ResampleSpec,
    attribute_breakdown,
    evaluate,
    framerate_stability,
    macc,
    normalized_precision,
    precision,
    retained_indices,
    score_sequence,
    success_auc,
)

__version__ = "0.1.0"
