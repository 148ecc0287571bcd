"""Frame-level ROC/AUC evaluation of anomaly scores against binary labels.

The ROC sweeps a threshold over every distinct score value with the rule
"score >= threshold -> anomalous", yielding a curve from (0, 0) to (1, 1);
the area under it is computed with the trapezoid rule, which makes ties
count half (the Mann-Whitney convention).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import AlignmentError, EvalError
from .ingest import LabelSeries
from .scoring import normalize_per_video

__all__ = [
    "roc_points",
    "auc_from_points",
    "auc_score",
    "concat_videos",
    "evaluate",
    "EvalReport",
]

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _check_pair(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise AlignmentError(
            f"{scores.size} scores vs {labels.size} labels"
        )
    if scores.size == 0:
        raise EvalError("cannot evaluate an empty score vector")
    if not np.all(np.isfinite(scores)):
        raise EvalError("scores contain non-finite values")
    if not np.isin(labels, (0, 1)).all():
        raise EvalError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> np.ndarray:
    """(fpr, tpr) pairs from (0,0) to (1,1), one per distinct score value.

    Raises an evaluation error when either class is missing, since the curve
    is undefined then.
    """
    scores, labels = _check_pair(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvalError(
            f"need both classes to build a ROC curve (got {n_pos} positive, "
            f"{n_neg} negative frames)"
        )
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_pos = labels[order] == 1
    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(~sorted_pos)
    # keep the last index of each distinct threshold value
    last = np.r_[np.nonzero(np.diff(sorted_scores))[0], sorted_scores.size - 1]
    fpr = np.r_[0.0, fp[last] / n_neg]
    tpr = np.r_[0.0, tp[last] / n_pos]
    return np.column_stack([fpr, tpr])


def auc_from_points(points: np.ndarray) -> float:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 2:
        raise EvalError(f"expected an (n, 2) array of ROC points, got {points.shape}")
    return float(_trapezoid(points[:, 1], points[:, 0]))


def auc_score(scores: Sequence[float], labels: Sequence[int]) -> float:
    return auc_from_points(roc_points(scores, labels))


def _label_values(labels: LabelSeries | Sequence[int]) -> Sequence[int]:
    return labels.labels if isinstance(labels, LabelSeries) else labels


def concat_videos(
    scores_by_video: Mapping[str, Sequence[float]],
    labels_by_video: Mapping[str, LabelSeries | Sequence[int]],
    normalize: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Join scores and labels per video id and concatenate in sorted-id order.

    Ids present on only one side, or per-video length mismatches, raise an
    alignment error. ``normalize`` min-max rescales each video's scores
    before concatenation.
    """
    score_ids = set(scores_by_video)
    label_ids = set(labels_by_video)
    if score_ids != label_ids:
        only_scores = sorted(score_ids - label_ids)
        only_labels = sorted(label_ids - score_ids)
        raise AlignmentError(
            f"video ids differ between scores and labels "
            f"(scores only: {only_scores}, labels only: {only_labels})"
        )
    all_scores: list[np.ndarray] = []
    all_labels: list[np.ndarray] = []
    for video_id in sorted(score_ids):
        s = np.asarray(scores_by_video[video_id], dtype=np.float64).ravel()
        l = np.asarray(_label_values(labels_by_video[video_id])).ravel()
        if s.size != l.size:
            raise AlignmentError(
                f"video {video_id!r}: {s.size} scores vs {l.size} labels"
            )
        if normalize:
            s = normalize_per_video(s)
        all_scores.append(s)
        all_labels.append(l)
    return np.concatenate(all_scores), np.concatenate(all_labels)


@dataclass(frozen=True)
class EvalReport:
    auc: float
    num_videos: int
    num_frames: int
    num_positive: int
    num_negative: int


def evaluate(
    scores_by_video: Mapping[str, Sequence[float]],
    labels_by_video: Mapping[str, LabelSeries | Sequence[int]],
    normalize: bool = False,
) -> EvalReport:
    """Frame-level AUC over all videos concatenated in sorted-id order."""
    scores, labels = concat_videos(scores_by_video, labels_by_video, normalize=normalize)
    value = auc_score(scores, labels)
    n_pos = int(np.asarray(labels).sum())
    return EvalReport(
        auc=value,
        num_videos=len(scores_by_video),
        num_frames=int(scores.size),
        num_positive=n_pos,
        num_negative=int(scores.size) - n_pos,
    )
