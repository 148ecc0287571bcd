"""Track and label file parsing plus observed/future window slicing.

Track files are UTF-8 CSV with a dialect header::

    #traj v1 base=<0|1> order=tlwh|cxcywh
    video_id,frame,ped_id,a,b,w,h

``a,b`` are the top-left corner (``tlwh``) or the center (``cxcywh``) per the
header. Additional lines starting with ``#`` are treated as metadata comments
and skipped. Internally everything is center format and 0-based frames;
``base=1`` inputs are shifted down at parse time.

Label files carry one binary flag per frame::

    #labels v1 [video=<id>]

followed by either a bare ``0|1`` per line or ``frame,label`` rows that must
cover ``0..N-1`` densely.

Tracks with frame gaps (identity re-detected after occlusion) are split into
maximal gap-free runs before windowing; no interpolation is ever performed,
since interpolated boxes would pollute the ground truth that prediction
errors are measured against.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .errors import ConfigError, ParseError
from .trajgeom import Box

__all__ = [
    "Track",
    "WindowPair",
    "LabelSeries",
    "parse_tracks",
    "load_tracks",
    "write_tracks",
    "parse_labels",
    "load_labels",
    "write_labels",
    "build_windows",
]

TRACK_HEADER_PREFIX = "#traj v1"
LABEL_HEADER_PREFIX = "#labels v1"


@dataclass(frozen=True)
class Track:
    """Ordered per-pedestrian sequence of (frame, box) observations."""

    video_id: str
    pedestrian_id: int
    entries: tuple[tuple[int, Box], ...]

    def frames(self) -> tuple[int, ...]:
        return tuple(frame for frame, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class WindowPair:
    """One observed/future slice of a track.

    ``observed`` covers frames ``t-tau+1 .. t`` and ``future_gt`` covers
    ``t+1 .. t+delta`` where ``t = t_last_observed``; both spans are
    contiguous by construction.
    """

    pedestrian_id: int
    t_last_observed: int
    observed: tuple[Box, ...]
    future_gt: tuple[Box, ...]
    tau: int
    delta: int

    @property
    def first_predicted_frame(self) -> int:
        return self.t_last_observed + 1


@dataclass(frozen=True)
class LabelSeries:
    """Per-frame binary anomaly flags for one video, indexed 0..N-1."""

    video_id: str
    labels: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.labels)


def _text_lines(source: IO[bytes] | IO[str] | bytes | str) -> Iterator[str]:
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    return iter(io.StringIO(text))


def _parse_track_header(line: str) -> tuple[int, str]:
    parts = line.strip().split()
    if len(parts) < 2 or " ".join(parts[:2]) != TRACK_HEADER_PREFIX:
        raise ParseError(f"expected header {TRACK_HEADER_PREFIX!r}, got {line.strip()!r}", line=1)
    base, order = 0, "cxcywh"
    for attr in parts[2:]:
        key, _, value = attr.partition("=")
        if key == "base":
            if value not in ("0", "1"):
                raise ParseError(f"base must be 0 or 1, got {value!r}", line=1)
            base = int(value)
        elif key == "order":
            if value not in ("tlwh", "cxcywh"):
                raise ParseError(f"order must be tlwh or cxcywh, got {value!r}", line=1)
            order = value
        else:
            raise ParseError(f"unknown track header attribute {attr!r}", line=1)
    return base, order


def parse_tracks(source: IO[bytes] | IO[str] | bytes | str) -> dict[str, list[Track]]:
    """Parse a track CSV stream into tracks grouped by video.

    Returns ``{video_id: [Track, ...]}`` with videos and pedestrian ids
    sorted and entries sorted by frame. Out-of-order rows are re-sorted;
    duplicate ``(video, pedestrian, frame)`` rows, non-positive box
    dimensions, and non-finite values are :class:`ParseError`\\ s naming the
    offending line.
    """
    lines = _text_lines(source)
    try:
        header = next(lines)
    except StopIteration:
        raise ParseError("empty track file", line=1) from None
    base, order = _parse_track_header(header)

    rows: dict[tuple[str, int], dict[int, Box]] = {}
    for lineno, raw in enumerate(lines, start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != 7:
            raise ParseError(f"expected 7 comma-separated fields, got {len(fields)}", line=lineno)
        video_id = fields[0]
        try:
            frame = int(fields[1])
            ped_id = int(fields[2])
        except ValueError:
            raise ParseError(f"frame and ped_id must be integers: {line!r}", line=lineno) from None
        try:
            a, b, w, h = (float(v) for v in fields[3:7])
        except ValueError:
            raise ParseError(f"box values must be decimal reals: {line!r}", line=lineno) from None

        frame -= base
        if frame < 0:
            raise ParseError(f"frame index below declared base: {line!r}", line=lineno)
        if ped_id < 0:
            raise ParseError(f"pedestrian id must be >= 0: {line!r}", line=lineno)
        if not all(math.isfinite(v) for v in (a, b, w, h)):
            raise ParseError(f"non-finite box value: {line!r}", line=lineno)
        if w <= 0 or h <= 0:
            raise ParseError(f"box width/height must be positive: {line!r}", line=lineno)

        if order == "tlwh":
            box = Box(a + w / 2.0, b + h / 2.0, w, h)
        else:
            box = Box(a, b, w, h)

        per_track = rows.setdefault((video_id, ped_id), {})
        if frame in per_track:
            raise ParseError(
                f"duplicate frame {frame} for pedestrian {ped_id} in video {video_id!r}",
                line=lineno,
            )
        per_track[frame] = box

    grouped: dict[str, list[Track]] = {}
    for (video_id, ped_id) in sorted(rows):
        entries = tuple(sorted(rows[(video_id, ped_id)].items()))
        grouped.setdefault(video_id, []).append(Track(video_id, ped_id, entries))
    return grouped


def load_tracks(path: str | Path) -> dict[str, list[Track]]:
    with open(path, "rb") as fh:
        return parse_tracks(fh)


def write_tracks(
    tracks_by_video: Mapping[str, Sequence[Track]],
    stream: IO[str],
    extra_header_lines: Iterable[str] = (),
) -> None:
    """Serialize tracks in the center-format dialect with full float precision."""
    stream.write(f"{TRACK_HEADER_PREFIX} base=0 order=cxcywh\n")
    for extra in extra_header_lines:
        stream.write(f"#{extra.lstrip('#').strip()}\n")
    for video_id in sorted(tracks_by_video):
        for track in sorted(tracks_by_video[video_id], key=lambda t: t.pedestrian_id):
            for frame, box in track.entries:
                stream.write(
                    f"{video_id},{frame},{track.pedestrian_id},"
                    f"{box.x!r},{box.y!r},{box.w!r},{box.h!r}\n"
                )


def parse_labels(source: IO[bytes] | IO[str] | bytes | str, video_id: str = "") -> LabelSeries:
    """Parse a label file into a dense per-frame 0/1 series.

    A `video=` attribute in the header overrides the ``video_id`` argument.
    The ``frame,label`` form must cover frames 0..N-1 exactly once each.
    """
    lines = _text_lines(source)
    try:
        header = next(lines)
    except StopIteration:
        raise ParseError("empty label file", line=1) from None
    parts = header.strip().split()
    if len(parts) < 2 or " ".join(parts[:2]) != LABEL_HEADER_PREFIX:
        raise ParseError(f"expected header {LABEL_HEADER_PREFIX!r}, got {header.strip()!r}", line=1)
    for attr in parts[2:]:
        key, _, value = attr.partition("=")
        if key == "video":
            video_id = value
        else:
            raise ParseError(f"unknown label header attribute {attr!r}", line=1)

    bare: list[int] = []
    keyed: dict[int, int] = {}
    form: str | None = None
    for lineno, raw in enumerate(lines, start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) == 1:
            row_form = "bare"
        elif len(fields) == 2:
            row_form = "keyed"
        else:
            raise ParseError(f"expected 1 or 2 fields, got {len(fields)}", line=lineno)
        if form is None:
            form = row_form
        elif form != row_form:
            raise ParseError("mixed bare and frame,label rows in one file", line=lineno)

        try:
            values = [int(v) for v in fields]
        except ValueError:
            raise ParseError(f"labels must be integers: {line!r}", line=lineno) from None
        label = values[-1]
        if label not in (0, 1):
            raise ParseError(f"label must be 0 or 1, got {label}", line=lineno)
        if row_form == "bare":
            bare.append(label)
        else:
            frame = values[0]
            if frame < 0:
                raise ParseError(f"frame index must be >= 0, got {frame}", line=lineno)
            if frame in keyed:
                raise ParseError(f"duplicate frame {frame}", line=lineno)
            keyed[frame] = label

    if form == "keyed":
        n = max(keyed) + 1 if keyed else 0
        missing = [f for f in range(n) if f not in keyed]
        if missing:
            raise ParseError(f"missing frames {missing[:5]} in frame,label rows")
        labels = tuple(keyed[f] for f in range(n))
    else:
        labels = tuple(bare)
    return LabelSeries(video_id=video_id, labels=labels)


def load_labels(path: str | Path, video_id: str | None = None) -> LabelSeries:
    path = Path(path)
    if video_id is None:
        video_id = path.stem
    with open(path, "rb") as fh:
        return parse_labels(fh, video_id=video_id)


def write_labels(
    series: LabelSeries, stream: IO[str], extra_header_lines: Sequence[str] = ()
) -> None:
    stream.write(f"{LABEL_HEADER_PREFIX} video={series.video_id}\n")
    for line in extra_header_lines:
        stream.write(f"#{line}\n" if not line.startswith("#") else f"{line}\n")
    for label in series.labels:
        stream.write(f"{label}\n")


def _gap_free_runs(entries: Sequence[tuple[int, Box]]) -> list[Sequence[tuple[int, Box]]]:
    runs: list[Sequence[tuple[int, Box]]] = []
    start = 0
    for i in range(1, len(entries)):
        if entries[i][0] != entries[i - 1][0] + 1:
            runs.append(entries[start:i])
            start = i
    runs.append(entries[start:])
    return runs


def build_windows(track: Track, tau: int, delta: int, stride: int = 1) -> list[WindowPair]:
    """Slice a track into observed/future window pairs.

    A gap-free run of N frames yields ``max(0, N - tau - delta + 1)`` windows
    at stride 1; larger strides keep observation starts at offsets
    ``0, stride, 2*stride, ...`` within each run. Tracks shorter than
    ``tau + delta`` yield an empty list. Frame gaps split the track into
    maximal gap-free runs that are windowed independently.
    """
    if tau < 1 or delta < 1:
        raise ConfigError(f"tau and delta must be >= 1, got tau={tau} delta={delta}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")

    windows: list[WindowPair] = []
    if not track.entries:
        return windows
    for run in _gap_free_runs(track.entries):
        last_start = len(run) - tau - delta
        for start in range(0, last_start + 1, stride):
            observed = run[start : start + tau]
            future = run[start + tau : start + tau + delta]
            windows.append(
                WindowPair(
                    pedestrian_id=track.pedestrian_id,
                    t_last_observed=observed[-1][0],
                    observed=tuple(box for _, box in observed),
                    future_gt=tuple(box for _, box in future),
                    tau=tau,
                    delta=delta,
                )
            )
    return windows
