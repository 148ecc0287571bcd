"""Turn per-window prediction errors into dense per-frame anomaly scores.

Pipeline: each window yields one error per predicted step (frames
``t_c .. t_c+delta-1`` with ``t_c`` the first predicted frame). Per
pedestrian these are aggregated into a sparse frame->score series either by

* ``summed``   -- the window's errors are summed into a single entry at
  ``t_c``, or
* ``flattened`` -- every per-step error lands on its own frame and each
  frame is divided by the number of windows covering it (or, optionally, by
  the pedestrian's total window count).

Videos are then pooled frame-by-frame with a max over pedestrians; frames no
pedestrian scored get 0.

Score files mirror the track dialect::

    #scores v1 kind=<summed|flattened> measure=<m1|m2|m3>
    video_id,frame,score

with frames dense from 0 per video and extra ``#`` lines skipped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO, Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import AlignmentError, ConfigError, ParseError
from .ingest import Track, WindowPair, build_windows
from .predictor import Prediction
from .trajgeom import Box, MEASURES

__all__ = [
    "WindowErrors",
    "ScoreResult",
    "score_window",
    "aggregate_summed",
    "aggregate_flattened",
    "aggregate",
    "frame_pool",
    "normalize_per_video",
    "score_video",
    "write_scores",
    "parse_scores",
    "load_scores",
    "SCORE_HEADER_PREFIX",
    "AGG_KINDS",
    "DIVISORS",
]

SCORE_HEADER_PREFIX = "#scores v1"
AGG_KINDS = ("summed", "flattened")
DIVISORS = ("covering", "total")


@dataclass(frozen=True)
class WindowErrors:
    """Per-step errors of one window; ``errors[i]`` describes frame
    ``t_first_predicted + i``."""

    pedestrian_id: int
    t_first_predicted: int
    errors: tuple[float, ...]


def _resolve_measure(measure: str | Callable[[Box, Box], float]) -> Callable[[Box, Box], float]:
    if callable(measure):
        return measure
    try:
        return MEASURES[measure]
    except KeyError:
        raise ConfigError(
            f"unknown measure {measure!r} (expected one of {sorted(MEASURES)})"
        ) from None


def score_window(
    window: WindowPair,
    prediction: Prediction,
    measure: str | Callable[[Box, Box], float],
) -> WindowErrors:
    """Compare predicted boxes against the window's ground-truth future."""
    fn = _resolve_measure(measure)
    if prediction.pedestrian_id != window.pedestrian_id:
        raise AlignmentError(
            f"prediction is for pedestrian {prediction.pedestrian_id}, "
            f"window for {window.pedestrian_id}"
        )
    if prediction.t_last_observed != window.t_last_observed:
        raise AlignmentError(
            f"prediction anchored at frame {prediction.t_last_observed}, "
            f"window at {window.t_last_observed}"
        )
    if len(prediction.boxes) != len(window.future_gt):
        raise AlignmentError(
            f"prediction has {len(prediction.boxes)} boxes, "
            f"window expects {len(window.future_gt)}"
        )
    errors = tuple(
        float(fn(gt, pred)) for gt, pred in zip(window.future_gt, prediction.boxes)
    )
    return WindowErrors(window.pedestrian_id, window.first_predicted_frame, errors)


def aggregate_summed(window_errors: Iterable[WindowErrors]) -> dict[int, float]:
    """One entry per window at its first predicted frame: the error sum."""
    series: dict[int, float] = {}
    for we in window_errors:
        value = float(sum(we.errors))
        frame = we.t_first_predicted
        series[frame] = max(series[frame], value) if frame in series else value
    return series


def aggregate_flattened(
    window_errors: Iterable[WindowErrors], divisor: str = "covering"
) -> dict[int, float]:
    """Average the per-step errors landing on each frame.

    ``divisor="covering"`` divides each frame by how many windows reached
    it; ``divisor="total"`` divides by the total number of windows instead.
    """
    if divisor not in DIVISORS:
        raise ConfigError(f"unknown divisor {divisor!r} (expected one of {DIVISORS})")
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    total = 0
    for we in window_errors:
        total += 1
        for i, err in enumerate(we.errors):
            frame = we.t_first_predicted + i
            sums[frame] = sums.get(frame, 0.0) + err
            counts[frame] = counts.get(frame, 0) + 1
    if divisor == "covering":
        return {frame: sums[frame] / counts[frame] for frame in sums}
    return {frame: sums[frame] / total for frame in sums}


def aggregate(
    window_errors: Iterable[WindowErrors], kind: str, divisor: str = "covering"
) -> dict[int, float]:
    if kind == "summed":
        return aggregate_summed(window_errors)
    if kind == "flattened":
        return aggregate_flattened(window_errors, divisor=divisor)
    raise ConfigError(f"unknown aggregation {kind!r} (expected one of {AGG_KINDS})")


def frame_pool(
    per_pedestrian: Iterable[Mapping[int, float]], num_frames: int
) -> np.ndarray:
    """Max over pedestrians per frame, dense over ``0..num_frames-1``.

    Frames no pedestrian scored stay 0. Entries outside the frame range
    mean the caller sized the video wrong and raise an alignment error.
    """
    if num_frames < 0:
        raise ConfigError(f"num_frames must be >= 0, got {num_frames}")
    pooled = np.zeros(num_frames, dtype=np.float64)
    for series in per_pedestrian:
        for frame, value in series.items():
            if not 0 <= frame < num_frames:
                raise AlignmentError(
                    f"score entry at frame {frame} outside video of {num_frames} frames"
                )
            if value > pooled[frame]:
                pooled[frame] = value
    return pooled


def normalize_per_video(scores: np.ndarray) -> np.ndarray:
    """Min-max normalize one video's score vector; constant input -> zeros."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        return scores.copy()
    lo = float(scores.min())
    hi = float(scores.max())
    if hi == lo:
        return np.zeros_like(scores)
    return (scores - lo) / (hi - lo)


@dataclass(frozen=True)
class ScoreResult:
    """Dense per-frame scores for one video plus how many windows fed them."""

    scores: np.ndarray
    num_windows: int


def score_video(
    tracks: Sequence[Track],
    tau: int,
    delta: int,
    predictor: Callable[[WindowPair], Prediction],
    measure: str | Callable[[Box, Box], float],
    kind: str = "flattened",
    divisor: str = "covering",
    stride: int = 1,
    num_frames: int | None = None,
) -> ScoreResult:
    """Run the whole per-video pipeline: windows -> predictions -> errors ->
    per-pedestrian aggregation -> frame max-pool.

    ``num_frames`` defaults to one past the last track frame. Videos whose
    tracks are all too short for a single window come back as all zeros.
    """
    if num_frames is None:
        last = -1
        for track in tracks:
            if track.entries:
                last = max(last, track.entries[-1][0])
        num_frames = last + 1
    per_ped: list[dict[int, float]] = []
    total_windows = 0
    for track in tracks:
        windows = build_windows(track, tau, delta, stride=stride)
        if not windows:
            continue
        total_windows += len(windows)
        errors = [score_window(w, predictor(w), measure) for w in windows]
        per_ped.append(aggregate(errors, kind, divisor=divisor))
    return ScoreResult(frame_pool(per_ped, num_frames), total_windows)


def write_scores(
    series: Mapping[str, np.ndarray | Sequence[float]],
    kind: str,
    measure: str,
    stream: IO[str],
    extra_header_lines: Sequence[str] = (),
) -> None:
    """Write dense per-video scores in the score dialect, videos sorted by id."""
    stream.write(f"{SCORE_HEADER_PREFIX} kind={kind} measure={measure}\n")
    for line in extra_header_lines:
        stream.write(f"#{line}\n" if not line.startswith("#") else f"{line}\n")
    for video_id in sorted(series):
        for frame, value in enumerate(series[video_id]):
            stream.write(f"{video_id},{frame},{float(value)!r}\n")


def _score_lines(source: IO[bytes] | IO[str] | bytes | str) -> Iterator[str]:
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    yield from text.splitlines()


def parse_scores(
    source: IO[bytes] | IO[str] | bytes | str,
) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Parse a score file; returns (per-video dense arrays, header attrs).

    Frames must be dense from 0 within each video once rows are sorted.
    """
    lines = list(_score_lines(source))
    if not lines or not lines[0].startswith(SCORE_HEADER_PREFIX):
        raise ParseError(f"expected header starting with {SCORE_HEADER_PREFIX!r}", line=1)
    attrs: dict[str, str] = {}
    for token in lines[0][len(SCORE_HEADER_PREFIX):].split():
        if "=" in token:
            key, value = token.split("=", 1)
            attrs[key] = value
    rows: dict[str, list[tuple[int, float]]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = [p.strip() for p in stripped.split(",")]
        if len(parts) != 3:
            raise ParseError(f"expected 3 fields, got {len(parts)}", line=lineno)
        video_id = parts[0]
        try:
            frame = int(parts[1])
            value = float(parts[2])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if not np.isfinite(value):
            raise ParseError(f"non-finite score {parts[2]!r}", line=lineno)
        rows.setdefault(video_id, []).append((frame, value))
    series: dict[str, np.ndarray] = {}
    for video_id, entries in rows.items():
        entries.sort()
        frames = [f for f, _ in entries]
        if frames != list(range(len(entries))):
            raise ParseError(
                f"video {video_id!r}: score frames are not dense from 0"
            )
        series[video_id] = np.array([v for _, v in entries], dtype=np.float64)
    return series, attrs


def load_scores(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "rb") as fh:
        return parse_scores(fh)
