"""Command-line entry point: `synth`, `score`, `eval`, and `sweep`.

Configuration precedence is command-line flag over config-file key over
built-in default; the effective configuration is echoed as a ``#config``
header line into every output file so runs stay attributable. Outputs carry
no timestamps and floats are written via repr, so identical inputs and
configuration produce byte-identical files.
"""

from __future__ import annotations

import argparse
import sys
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import AlignmentError, ConfigError, TrajanomError
from .evalkit import auc_score, evaluate
from .ingest import (
    LABEL_HEADER_PREFIX,
    TRACK_HEADER_PREFIX,
    LabelSeries,
    Track,
    load_labels,
    load_tracks,
    write_labels,
    write_tracks,
)
from .predictor import load_weights, make_predictor
from .scoring import (
    AGG_KINDS,
    DIVISORS,
    load_scores,
    normalize_per_video,
    score_video,
    write_scores,
)
from .synth import RNG_IDENTITY, SceneSpec, build_suite, generate
from .trajgeom import MEASURES

__all__ = ["main"]

TIMESCALES = (3, 5, 13, 25)

DEFAULTS = {
    "tau": "5",
    "delta": "5",
    "stride": "1",
    "measure": "m3",
    "agg": "flattened",
    "divisor": "covering",
    "predictor": "cv",
    "weights": "",
    "normalize": "0",
    "seed": "0",
}

_SUITE_KEYS = ("videos", "anomalies_per_video", "duration_min", "duration_max", "kinds")


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Plain key=value config text; blank lines and ``#`` comments skipped,
    later keys win."""
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        mapping[key.strip()] = value.strip()
    return mapping


@dataclass(frozen=True)
class RunConfig:
    tau: int
    delta: int
    stride: int | str
    measure: str
    agg: str
    divisor: str
    predictor: str
    weights: str
    normalize: bool
    seed: int

    def header_line(self) -> str:
        return (
            f"config tau={self.tau} delta={self.delta} stride={self.stride} "
            f"measure={self.measure} agg={self.agg} divisor={self.divisor} "
            f"predictor={self.predictor} weights={self.weights} "
            f"normalize={int(self.normalize)} seed={self.seed}"
        )


def _pick(args: argparse.Namespace, config: dict[str, str], key: str) -> str:
    value = getattr(args, key, None)
    if value is not None and value is not False and value is not True:
        return str(value)
    if value is True:  # store_true flag given
        return "1"
    if key in config:
        return config[key]
    return DEFAULTS[key]


def _parse_bool(raw: str, key: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"{key} must be a boolean, got {raw!r}")


def resolve_run_config(args: argparse.Namespace, stride_keyword: bool = False) -> RunConfig:
    config = parse_kv_file(args.config) if getattr(args, "config", None) else {}

    def _int(key: str, minimum: int = 1) -> int:
        raw = _pick(args, config, key)
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
        if value < minimum:
            raise ConfigError(f"{key} must be >= {minimum}, got {value}")
        return value

    stride_raw = _pick(args, config, "stride")
    stride: int | str
    if stride_keyword and stride_raw == "timescale":
        stride = "timescale"
    else:
        try:
            stride = int(stride_raw)
        except ValueError:
            raise ConfigError(f"stride must be an integer, got {stride_raw!r}") from None
        if stride < 1:
            raise ConfigError(f"stride must be >= 1, got {stride}")

    measure = _pick(args, config, "measure")
    if measure not in MEASURES:
        raise ConfigError(f"measure must be one of {sorted(MEASURES)}, got {measure!r}")
    agg = _pick(args, config, "agg")
    if agg not in AGG_KINDS:
        raise ConfigError(f"agg must be one of {AGG_KINDS}, got {agg!r}")
    divisor = _pick(args, config, "divisor")
    if divisor not in DIVISORS:
        raise ConfigError(f"divisor must be one of {DIVISORS}, got {divisor!r}")
    predictor = _pick(args, config, "predictor")
    if predictor not in ("cv", "bitrap"):
        raise ConfigError(f"predictor must be 'cv' or 'bitrap', got {predictor!r}")

    return RunConfig(
        tau=_int("tau"),
        delta=_int("delta"),
        stride=stride,
        measure=measure,
        agg=agg,
        divisor=divisor,
        predictor=predictor,
        weights=_pick(args, config, "weights"),
        normalize=_parse_bool(_pick(args, config, "normalize"), "normalize"),
        seed=_int("seed", minimum=-(2 ** 63)),
    )


def _expand_inputs(paths: Sequence[str], expected_prefix: str) -> list[Path]:
    """Files pass through; directories expand to the *.csv files inside whose
    header matches the expected dialect."""
    out: list[Path] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            for child in sorted(path.glob("*.csv")):
                with open(child, "r", encoding="utf-8") as fh:
                    first = fh.readline()
                if first.startswith(expected_prefix):
                    out.append(child)
        else:
            out.append(path)
    if not out:
        raise ConfigError(f"no input files matching {expected_prefix!r} found in {list(paths)}")
    return out


def _load_track_videos(paths: Iterable[Path]) -> dict[str, list[Track]]:
    videos: dict[str, list[Track]] = {}
    seen: set[tuple[str, int]] = set()
    for path in paths:
        for video_id, tracks in load_tracks(path).items():
            for track in tracks:
                key = (video_id, track.pedestrian_id)
                if key in seen:
                    raise AlignmentError(
                        f"pedestrian {track.pedestrian_id} of video {video_id!r} "
                        f"appears in more than one input file"
                    )
                seen.add(key)
                videos.setdefault(video_id, []).append(track)
    return videos


def _load_label_videos(paths: Iterable[Path]) -> dict[str, LabelSeries]:
    labels: dict[str, LabelSeries] = {}
    for path in paths:
        series = load_labels(path)
        if series.video_id in labels:
            raise AlignmentError(f"duplicate label file for video {series.video_id!r}")
        labels[series.video_id] = series
    return labels


def _build_predictor(cfg: RunConfig, tau: int, delta: int):
    if cfg.predictor == "cv":
        return make_predictor("cv")
    if not cfg.weights:
        raise ConfigError("the bitrap predictor requires --weights")
    weights = load_weights(Path(cfg.weights))
    if (weights.config.tau, weights.config.delta) != (tau, delta):
        print(
            f"warning: weights were fitted for tau={weights.config.tau} "
            f"delta={weights.config.delta}, running at tau={tau} delta={delta}",
            file=sys.stderr,
        )
    return make_predictor("bitrap", weights)


def _score_dataset(
    videos: dict[str, list[Track]], cfg: RunConfig, tau: int, delta: int, stride: int
) -> tuple[dict[str, np.ndarray], int, list[str]]:
    predictor = _build_predictor(cfg, tau, delta)
    scored: dict[str, np.ndarray] = {}
    empty: list[str] = []
    total = 0
    for video_id in sorted(videos):
        result = score_video(
            videos[video_id], tau, delta, predictor, cfg.measure,
            kind=cfg.agg, divisor=cfg.divisor, stride=stride,
        )
        total += result.num_windows
        if result.num_windows == 0:
            empty.append(video_id)
        scores = normalize_per_video(result.scores) if cfg.normalize else result.scores
        scored[video_id] = scores
    return scored, total, empty


def _open_out(path: str | None):
    if path:
        return open(path, "w", encoding="utf-8")
    return nullcontext(sys.stdout)


def cmd_synth(args: argparse.Namespace) -> int:
    mapping = parse_kv_file(args.spec)
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)

    if "videos" in mapping:
        if "anomalies" in mapping:
            raise ConfigError("suite mode (videos=...) derives anomalies itself; "
                              "drop the explicit anomalies key")
        suite_args = {key: mapping.pop(key) for key in list(_SUITE_KEYS) if key in mapping}
        if "seed" not in mapping:
            raise ConfigError("scene config must set a seed")
        master_seed = int(mapping.pop("seed"))
        frame_count = int(mapping.pop("frame_count", "300"))
        n_pedestrians = int(mapping.pop("n_pedestrians", "6"))
        overrides = {}
        for key, raw in mapping.items():
            if key == "video_id":
                raise ConfigError("suite mode names videos itself; drop video_id")
            try:
                overrides[key] = float(raw)
            except ValueError:
                raise ConfigError(f"scene key {key}={raw!r} is not a number") from None
        kinds = tuple(
            k.strip() for k in suite_args.get("kinds", "sprint,reversal,zigzag").split(",") if k.strip()
        )
        specs = build_suite(
            master_seed,
            num_videos=int(suite_args["videos"]),
            frame_count=frame_count,
            n_pedestrians=n_pedestrians,
            anomalies_per_video=int(suite_args.get("anomalies_per_video", "2")),
            kinds=kinds,
            duration_range=(
                int(suite_args.get("duration_min", "10")),
                int(suite_args.get("duration_max", "13")),
            ),
            **overrides,
        )
    else:
        specs = [SceneSpec.from_mapping(mapping)]

    for spec in specs:
        tracks, labels = generate(spec)
        anomaly_echo = ";".join(
            f"{a.kind}:{a.pedestrian}:{a.start}:{a.duration}" for a in spec.anomalies
        )
        header = [
            f"rng {RNG_IDENTITY} seed={spec.seed}",
            f"anomalies {anomaly_echo}" if anomaly_echo else "anomalies none",
        ]
        with open(out_dir / f"{spec.video_id}_tracks.csv", "w", encoding="utf-8") as fh:
            write_tracks({spec.video_id: tracks}, fh, extra_header_lines=header)
        with open(out_dir / f"{spec.video_id}_labels.csv", "w", encoding="utf-8") as fh:
            write_labels(labels, fh, extra_header_lines=header)
    print(f"wrote {len(specs)} scene(s) to {out_dir}", file=sys.stderr)
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    cfg = resolve_run_config(args)
    videos = _load_track_videos(_expand_inputs(args.tracks, TRACK_HEADER_PREFIX))
    scored, total, empty = _score_dataset(videos, cfg, cfg.tau, cfg.delta, int(cfg.stride))
    for video_id in empty:
        print(
            f"warning: video {video_id!r} has no track long enough for "
            f"tau+delta={cfg.tau + cfg.delta} frames; its scores are all zero",
            file=sys.stderr,
        )
    with _open_out(args.out) as fh:
        write_scores(scored, cfg.agg, cfg.measure, fh, extra_header_lines=[cfg.header_line()])
    print(f"scored {len(scored)} video(s) from {total} window(s)", file=sys.stderr)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = parse_kv_file(args.config) if getattr(args, "config", None) else {}
    normalize = _parse_bool(_pick(args, config, "normalize"), "normalize")
    series, attrs = load_scores(args.scores)
    labels = _load_label_videos(_expand_inputs(args.labels, LABEL_HEADER_PREFIX))
    report = evaluate(series, labels, normalize=normalize)

    lines = [
        "#report v1",
        f"#config normalize={int(normalize)} kind={attrs.get('kind', '?')} "
        f"measure={attrs.get('measure', '?')}",
    ]
    for video_id in sorted(series):
        scores = normalize_per_video(series[video_id]) if normalize else series[video_id]
        values = labels[video_id].labels
        positives = int(sum(values))
        try:
            video_auc = repr(auc_score(scores, values))
        except TrajanomError:
            video_auc = "na"  # single-class video: curve undefined
        lines.append(
            f"video,{video_id},auc,{video_auc},frames,{len(values)},positives,{positives}"
        )
    lines.append(
        f"dataset,auc,{report.auc!r},videos,{report.num_videos},"
        f"frames,{report.num_frames},positives,{report.num_positive}"
    )
    with _open_out(args.out) as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"evaluated {report.num_videos} video(s): auc={report.auc!r}", file=sys.stderr)
    return 0


def _parse_list(raw: str, what: str, allowed: Sequence[str] | None = None) -> list[str]:
    items = [item.strip() for item in raw.split(",") if item.strip()]
    if not items:
        raise ConfigError(f"empty {what} list")
    if allowed is not None:
        for item in items:
            if item not in allowed:
                raise ConfigError(f"{what} entry {item!r} not in {tuple(allowed)}")
    return items


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = resolve_run_config(args, stride_keyword=True)
    videos = _load_track_videos(_expand_inputs(args.tracks, TRACK_HEADER_PREFIX))
    labels = _load_label_videos(_expand_inputs(args.labels, LABEL_HEADER_PREFIX))

    timescales = [int(t) for t in _parse_list(args.taus or ",".join(map(str, TIMESCALES)), "timescale")]
    measures = _parse_list(args.measures or ",".join(sorted(MEASURES)), "measure", sorted(MEASURES))
    aggs = _parse_list(args.aggs or ",".join(AGG_KINDS), "agg", AGG_KINDS)

    rows = ["timescale,measure,agg,auc"]
    for timescale in timescales:
        if timescale < 1:
            raise ConfigError(f"timescale must be >= 1, got {timescale}")
        stride = timescale if cfg.stride == "timescale" else int(cfg.stride)
        for measure in measures:
            for agg in aggs:
                cell = RunConfig(
                    tau=timescale, delta=timescale, stride=stride,
                    measure=measure, agg=agg, divisor=cfg.divisor,
                    predictor=cfg.predictor, weights=cfg.weights,
                    normalize=cfg.normalize, seed=cfg.seed,
                )
                scored, _, _ = _score_dataset(videos, cell, timescale, timescale, stride)
                report = evaluate(scored, labels, normalize=cfg.normalize)
                rows.append(f"{timescale},{measure},{agg},{report.auc!r}")

    with _open_out(args.out) as fh:
        fh.write("#sweep v1\n")
        fh.write(f"#{cfg.header_line()}\n")
        fh.write("\n".join(rows) + "\n")
    print(f"swept {len(rows) - 1} cell(s)", file=sys.stderr)
    return 0


def _add_run_flags(parser: argparse.ArgumentParser, stride_type=int) -> None:
    parser.add_argument("--config", help="key=value config file (flags override it)")
    parser.add_argument("--tau", type=int, help="observed window length in frames")
    parser.add_argument("--delta", type=int, help="predicted horizon in frames")
    parser.add_argument("--stride", type=stride_type, help="window start stride within each track")
    parser.add_argument("--measure", choices=sorted(MEASURES), help="box error measure")
    parser.add_argument("--agg", choices=AGG_KINDS, help="per-pedestrian aggregation")
    parser.add_argument("--divisor", choices=DIVISORS,
                        help="flattened-mode divisor: windows covering the frame, or all windows")
    parser.add_argument("--predictor", choices=("cv", "bitrap"), help="future-box predictor")
    parser.add_argument("--weights", help="weight container path (bitrap only)")
    parser.add_argument("--normalize", action="store_true",
                        help="min-max normalize scores per video")
    parser.add_argument("--seed", type=int, help="seed echoed into output headers")
    parser.add_argument("--out", help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajanom",
        description="Trajectory-prediction anomaly scoring for tracked pedestrians.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate synthetic scene track/label files")
    p_synth.add_argument("spec", help="scene spec as key=value text")
    p_synth.add_argument("--seed", type=int, help="override the spec seed")
    p_synth.add_argument("--out", help="output directory (default: .)")
    p_synth.set_defaults(func=cmd_synth)

    p_score = sub.add_parser("score", help="score track files into per-frame anomaly scores")
    p_score.add_argument("tracks", nargs="+", help="track files or directories")
    _add_run_flags(p_score)
    p_score.set_defaults(func=cmd_score)

    p_eval = sub.add_parser("eval", help="evaluate a score file against frame labels")
    p_eval.add_argument("scores", help="score file")
    p_eval.add_argument("--labels", nargs="+", required=True,
                        help="label files or directories")
    p_eval.add_argument("--config", help="key=value config file")
    p_eval.add_argument("--normalize", action="store_true",
                        help="min-max normalize each video before evaluating")
    p_eval.add_argument("--out", help="report path (default: stdout)")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="AUC grid over timescales x measures x aggregations")
    p_sweep.add_argument("tracks", nargs="+", help="track files or directories")
    p_sweep.add_argument("--labels", nargs="+", required=True,
                         help="label files or directories")
    p_sweep.add_argument("--taus", help="comma list of timescales (default 3,5,13,25)")
    p_sweep.add_argument("--measures", help="comma list of measures (default all)")
    p_sweep.add_argument("--aggs", help="comma list of aggregations (default both)")
    _add_run_flags(p_sweep, stride_type=str)
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrajanomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
