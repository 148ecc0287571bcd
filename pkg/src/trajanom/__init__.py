"""Anomalous pedestrian activity detection from tracked bounding boxes.

Observed box trajectories are extrapolated by a predictor (constant-velocity
least squares or a goal-conditioned bi-directional GRU), the deviation of the
prediction from the ground-truth future is measured per frame, per-pedestrian
deviations are aggregated over sliding windows, and frame-level scores are
evaluated against binary labels with ROC/AUC.
"""

from .errors import (
    AlignmentError,
    ConfigError,
    EvalError,
    GeometryError,
    NumericError,
    ParseError,
    TrajanomError,
    WeightError,
)
from .evalkit import EvalReport, auc_from_points, auc_score, concat_videos, evaluate, roc_points
from .ingest import (
    LabelSeries,
    Track,
    WindowPair,
    build_windows,
    load_labels,
    load_tracks,
    parse_labels,
    parse_tracks,
    write_labels,
    write_tracks,
)
from .predictor import (
    EPS_BOX,
    LatentParams,
    Prediction,
    PredictorConfig,
    WeightContainer,
    constant_velocity_boxes,
    decode_bidirectional,
    encode_history,
    latent_prior,
    load_weights,
    make_predictor,
    predict_bitrap,
    predict_constant_velocity,
    read_weights,
    required_tensors,
    save_weights,
    write_weights,
    zero_container,
)
from .scoring import (
    ScoreResult,
    WindowErrors,
    aggregate,
    aggregate_flattened,
    aggregate_summed,
    frame_pool,
    load_scores,
    normalize_per_video,
    parse_scores,
    score_video,
    score_window,
    write_scores,
)
from .synth import Anomaly, SceneSpec, SplitMix64, build_suite, generate
from .trajgeom import (
    MEASURES,
    Box,
    enclosing_box,
    giou,
    giou_error,
    iou,
    iou_error,
    l2_error,
)

__version__ = "0.1.0"

__all__ = [
    "TrajanomError", "GeometryError", "ParseError", "WeightError",
    "AlignmentError", "NumericError", "EvalError", "ConfigError",
    "Box", "iou", "giou", "enclosing_box",
    "iou_error", "giou_error", "l2_error", "MEASURES",
    "Track", "WindowPair", "LabelSeries",
    "parse_tracks", "load_tracks", "write_tracks",
    "parse_labels", "load_labels", "write_labels", "build_windows",
    "EPS_BOX", "PredictorConfig", "Prediction", "LatentParams",
    "WeightContainer", "required_tensors", "zero_container",
    "save_weights", "load_weights", "write_weights", "read_weights",
    "encode_history", "latent_prior", "decode_bidirectional",
    "predict_bitrap", "constant_velocity_boxes", "predict_constant_velocity",
    "make_predictor",
    "WindowErrors", "ScoreResult", "score_window",
    "aggregate", "aggregate_summed", "aggregate_flattened",
    "frame_pool", "normalize_per_video", "score_video",
    "write_scores", "parse_scores", "load_scores",
    "roc_points", "auc_from_points", "auc_score",
    "concat_videos", "evaluate", "EvalReport",
    "SplitMix64", "Anomaly", "SceneSpec", "generate", "build_suite",
    "__version__",
]
