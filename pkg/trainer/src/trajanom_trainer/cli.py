"""`trajanom-train`: fit the predictor on track files and export weights."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from trajanom.ingest import TRACK_HEADER_PREFIX, load_tracks

from .train import TrainConfig, TrainingDiverged, export_weights, train, write_log


def _collect_tracks(paths: list[str]) -> list:
    tracks = []
    for raw in paths:
        path = Path(raw)
        files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
        for file in files:
            if path.is_dir():
                with open(file, "r", encoding="utf-8") as fh:
                    if not fh.readline().startswith(TRACK_HEADER_PREFIX):
                        continue
            for video_tracks in load_tracks(file).values():
                tracks.extend(video_tracks)
    if not tracks:
        raise ValueError(f"no track files found in {paths}")
    return tracks


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajanom-train",
        description="Train the trajectory predictor on normal-only tracks "
                    "and export an engine-ready weight container.")
    parser.add_argument("tracks", nargs="+", help="track files or directories")
    parser.add_argument("--epochs", type=int, required=True)
    parser.add_argument("--tau", type=int, default=5)
    parser.add_argument("--delta", type=int, default=5)
    parser.add_argument("--hidden", type=int, default=256)
    parser.add_argument("--latent", type=int, default=32)
    parser.add_argument("--lr", type=float, default=0.001)
    parser.add_argument("--batch-size", type=int, default=30)
    parser.add_argument("--val-fraction", type=float, default=0.3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="weight container path")
    parser.add_argument("--log", help="training log path (default: stderr)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = TrainConfig(
        tau=args.tau, delta=args.delta, epochs=args.epochs,
        hidden_size=args.hidden, latent_dim=args.latent,
        learning_rate=args.lr, batch_size=args.batch_size,
        val_fraction=args.val_fraction, seed=args.seed)
    try:
        tracks = _collect_tracks(args.tracks)
        result = train(tracks, config)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.log:
            with open(args.log, "w", encoding="utf-8") as fh:
                write_log(exc.log, fh)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    export_weights(result.container, args.out)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            write_log(result.log, fh)
    else:
        write_log(result.log, sys.stderr)
    print(f"exported {args.out} after {args.epochs} epoch(s)", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
