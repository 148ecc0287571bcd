"""Acceptance gate: one test per release criterion, one PASS/FAIL line each.

Each test prints a single status line even under captured output, so a bare
`pytest tests/test_acceptance.py` run reads as a checklist.
"""

import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from oracle_utils import (
    mann_whitney_auc,
    oracle_forward,
    random_container,
    random_integer_corner_box,
    raster_iou_giou,
)
from trajanom.cli import TIMESCALES, main
from trajanom.evalkit import auc_score, concat_videos
from trajanom.ingest import Box, Track, WindowPair, build_windows
from trajanom.predictor import (
    PredictorConfig,
    make_predictor,
    predict_bitrap,
    predict_constant_velocity,
    zero_container,
)
from trajanom.scoring import AGG_KINDS, WindowErrors, aggregate, score_video
from trajanom.synth import SplitMix64, build_suite, generate
from trajanom.trajgeom import MEASURES, giou, iou


@contextmanager
def criterion(capsys, name):
    """Emit exactly one visible PASS/FAIL line for an acceptance criterion."""
    status = {"detail": ""}
    try:
        yield status
    except BaseException:
        with capsys.disabled():
            print(f"[ FAIL ] {name}")
        raise
    with capsys.disabled():
        suffix = f" ({status['detail']})" if status["detail"] else ""
        print(f"[ PASS ] {name}{suffix}")


def test_geometry_matches_rasterization_oracle(capsys):
    with criterion(capsys, "geometry vs rasterization oracle, 1000 pairs @ 1e-9") as st:
        rng = random.Random(64)
        started = time.monotonic()
        for _ in range(1000):
            a = random_integer_corner_box(rng)
            b = random_integer_corner_box(rng)
            ref_iou, ref_giou = raster_iou_giou(a, b)
            assert iou(a, b) == pytest.approx(ref_iou, abs=1e-9)
            assert giou(a, b) == pytest.approx(ref_giou, abs=1e-9)
        elapsed = time.monotonic() - started
        assert elapsed < 5.0
        st["detail"] = f"{elapsed:.2f}s"


def test_aggregation_fixture_matches_hand_enumeration(capsys):
    with criterion(capsys, "summed/flattened aggregation fixture, bit-equal"):
        #8-frame track, tau=delta=3 -> exactly three windows whose first
        # predicted frames are 3, 4, 5 (frames 4, 5, 6 counting from one)
        track = Track("v", 0, tuple(
            (f, Box(float(f), 0.0, 2.0, 2.0)) for f in range(8)))
        windows = build_windows(track, tau=3, delta=3)
        assert [w.first_predicted_frame for w in windows] == [3, 4, 5]

        # fabricated dyadic per-step errors keep every sum and mean exact
        fabricated = [
            WindowErrors(0, 3, (1.0, 2.0, 4.0)),
            WindowErrors(0, 4, (8.0, 16.0, 32.0)),
            WindowErrors(0, 5, (64.0, 128.0, 256.0)),
        ]
        summed = aggregate(fabricated, kind="summed")
        assert summed == {3: 7.0, 4: 56.0, 5: 448.0}

        flattened = aggregate(fabricated, kind="flattened")
        assert flattened == {3: 1.0, 4: 5.0, 5: 28.0, 6: 80.0, 7: 256.0}


def test_window_count_law(capsys):
    with criterion(capsys, "window count = max(0, N-tau-delta+1), N<=200") as st:
        box = Box(10.0, 10.0, 4.0, 4.0)
        checked = 0
        for tau in (3, 5, 13, 25):
            for delta in (3, 5, 13, 25):
                for n in range(201):
                    track = Track("v", 0, tuple((f, box) for f in range(n)))
                    got = len(build_windows(track, tau, delta))
                    # brute-force enumeration of feasible start frames
                    want = sum(1 for s in range(n + 1) if s + tau + delta <= n)
                    assert got == want == max(0, n - tau - delta + 1)
                    checked += 1
        st["detail"] = f"{checked} configurations"


def test_auc_equals_mann_whitney(capsys):
    with criterion(capsys, "AUC vs Mann-Whitney @ 1e-12, 1000 instances + ties"):
        rng = np.random.default_rng(20260825)
        for i in range(1000):
            n = int(rng.integers(2, 501))
            labels = rng.integers(0, 2, n)
            labels[0], labels[1] = 0, 1  # guarantee both classes
            if i % 3 == 0:
                scores = rng.integers(0, 6, n).astype(float)  # heavy ties
            elif i % 3 == 1:
                scores = rng.normal(size=n)
            else:
                scores = np.round(rng.normal(size=n), 1)  # occasional ties
            got = auc_score(scores, labels)
            assert got == pytest.approx(mann_whitney_auc(scores, labels), abs=1e-12)
            if i % 50 == 0:
                # strictly increasing transforms preserve the ranking and
                # therefore the exact ROC points
                assert auc_score(3.0 * scores + 1.0, labels) == got
                assert auc_score(scores ** 3, labels) == got


def test_end_to_end_synthetic_benchmark(capsys):
    with criterion(capsys, "synthetic benchmark AUC >= 0.90 in < 30s") as st:
        started = time.monotonic()
        score_map, label_map = {}, {}
        for spec in build_suite(20260825, num_videos=20):
            tracks, labels = generate(spec)
            result = score_video(tracks, tau=5, delta=5,
                                 predictor=predict_constant_velocity,
                                 measure="m3", kind="flattened")
            score_map[spec.video_id] = result.scores
            label_map[spec.video_id] = np.asarray(labels.labels)
        scores, labels = concat_videos(score_map, label_map)
        auc = auc_score(scores, labels)
        elapsed = time.monotonic() - started
        assert auc >= 0.90
        assert elapsed < 30.0
        st["detail"] = f"auc={auc:.4f}, {elapsed:.1f}s, 20 videos x 300 frames x 6 peds"


def test_sweep_grids_are_byte_deterministic(tmp_path, capsys):
    with criterion(capsys, "4x3x2 sweep grid + stride ablation, byte-deterministic") as st:
        cfg = tmp_path / "suite.cfg"
        cfg.write_text("seed=20260825\nvideos=3\nframe_count=120\nn_pedestrians=3\n",
                       encoding="utf-8")
        suite = tmp_path / "suite"
        assert main(["synth", str(cfg), "--out", str(suite)]) == 0

        def run(stride: str, name: str) -> bytes:
            out = tmp_path / name
            rc = main(["sweep", str(suite), "--labels", str(suite),
                       "--stride", stride, "--out", str(out)])
            assert rc == 0
            return out.read_bytes()

        for stride, tag in (("1", "grid"), ("timescale", "ablation")):
            first = run(stride, f"{tag}_a.csv")
            second = run(stride, f"{tag}_b.csv")
            assert first == second
            rows = [line for line in first.decode().splitlines()
                    if line and not line.startswith("#")]
            assert rows[0] == "timescale,measure,agg,auc"
            cells = {tuple(r.split(",")[:3]) for r in rows[1:]}
            assert len(rows) - 1 == len(cells) == 4 * 3 * 2
            timescales = {int(r.split(",")[0]) for r in rows[1:]}
            assert timescales == set(TIMESCALES)
        st["detail"] = "24 cells each, reruns identical"


def test_forward_pass_parity(capsys):
    with criterion(capsys, "forward parity @ 1e-5 + zero-weight identity") as st:
        config = PredictorConfig(tau=3, delta=3, hidden_size=8, latent_dim=4)
        container = random_container(config, seed=31337)
        rng = np.random.default_rng(99)

        def window_for(observed):
            dummy_future = tuple(observed[-1:] * 3)
            return WindowPair(0, 2, tuple(observed), dummy_future, tau=3, delta=3)

        for probe in range(50):
            origin = rng.uniform(-50, 50, size=2)
            step = rng.uniform(-3, 3, size=2)
            observed = [
                Box(origin[0] + step[0] * t + rng.normal(0, 0.3),
                    origin[1] + step[1] * t + rng.normal(0, 0.3),
                    float(rng.uniform(5, 20)), float(rng.uniform(5, 20)))
                for t in range(3)
            ]
            got = predict_bitrap(window_for(observed), container)
            want = oracle_forward(container, observed, delta=3)
            for g, w in zip(got.boxes, want):
                assert g.as_tuple() == pytest.approx(w, abs=1e-5)

        zeros = zero_container(config)
        observed = [Box(12.0, -7.0, 9.0, 15.0), Box(13.5, -6.0, 9.0, 15.0),
                    Box(15.0, -5.0, 9.0, 15.0)]
        for box in predict_bitrap(window_for(observed), zeros).boxes:
            assert box.as_tuple() == observed[-1].as_tuple()
        st["detail"] = "50 probes, hidden=8 latent=4"


def test_external_dataset_grid_capability(capsys):
    # Reference results on the public surveillance datasets need the real
    # videos, an external tracker, and trained weights; none ship here. What
    # the engine must guarantee is the full evaluation grid those results
    # live on: every timescale x measure x aggregation cell is runnable.
    with criterion(capsys, "external-dataset grid capability (values out of scope)") as st:
        assert TIMESCALES == (3, 5, 13, 25)
        assert set(MEASURES) == {"m1", "m2", "m3"}
        assert tuple(AGG_KINDS) == ("summed", "flattened")
        assert make_predictor("cv") is not None
        combos = [(t, m, a) for t in TIMESCALES for m in sorted(MEASURES)
                  for a in AGG_KINDS]
        assert len(combos) == 24
        st["detail"] = "24-cell grid runnable; dataset values need real data + weights"
