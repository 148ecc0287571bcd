import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trajanom import (
    AlignmentError,
    Box,
    ConfigError,
    ParseError,
    Prediction,
    Track,
    WindowErrors,
    aggregate,
    aggregate_flattened,
    aggregate_summed,
    build_windows,
    frame_pool,
    l2_error,
    make_predictor,
    normalize_per_video,
    parse_scores,
    score_video,
    score_window,
    write_scores,
)


def make_track(frames, video_id="v", ped=1, step=2.0):
    entries = tuple((f, Box(10.0 + step * f, 20.0, 8.0, 16.0)) for f in frames)
    return Track(video_id=video_id, pedestrian_id=ped, entries=entries)


# ------------------------------------------------------------- window scoring


def test_score_window_applies_measure_per_step():
    track = make_track(range(8))
    window = build_windows(track, 3, 3)[0]
    shifted = Prediction(
        pedestrian_id=window.pedestrian_id,
        t_last_observed=window.t_last_observed,
        boxes=tuple(Box(b.x + 3.0, b.y + 4.0, b.w, b.h) for b in window.future_gt),
    )
    we = score_window(window, shifted, "m3")
    assert we.t_first_predicted == window.first_predicted_frame
    assert we.errors == (5.0, 5.0, 5.0)
    # callable measures are accepted too
    we2 = score_window(window, shifted, l2_error)
    assert we2.errors == we.errors


def test_score_window_alignment_checks():
    track = make_track(range(8))
    window = build_windows(track, 3, 3)[0]
    good = Prediction(window.pedestrian_id, window.t_last_observed, window.future_gt)
    with pytest.raises(AlignmentError):
        score_window(window, Prediction(99, window.t_last_observed, window.future_gt), "m3")
    with pytest.raises(AlignmentError):
        score_window(window, Prediction(window.pedestrian_id, 77, window.future_gt), "m3")
    with pytest.raises(AlignmentError):
        score_window(window, Prediction(window.pedestrian_id, window.t_last_observed,
                                        window.future_gt[:-1]), "m3")
    with pytest.raises(ConfigError):
        score_window(window, good, "m9")


# --------------------------------------------------- hand-enumerated aggregation


def fabricated_window_errors():
    """Eight-frame track, tau=delta=3: three windows with dyadic errors."""
    return [
        WindowErrors(pedestrian_id=1, t_first_predicted=3, errors=(1.0, 2.0, 4.0)),
        WindowErrors(pedestrian_id=1, t_first_predicted=4, errors=(8.0, 16.0, 32.0)),
        WindowErrors(pedestrian_id=1, t_first_predicted=5, errors=(64.0, 128.0, 256.0)),
    ]


def test_summed_series_hand_enumerated():
    assert aggregate_summed(fabricated_window_errors()) == {3: 7.0, 4: 56.0, 5: 448.0}


def test_flattened_series_hand_enumerated():
    expected = {3: 1.0, 4: (2.0 + 8.0) / 2, 5: (4.0 + 16.0 + 64.0) / 3,
                6: (32.0 + 128.0) / 2, 7: 256.0}
    assert aggregate_flattened(fabricated_window_errors()) == expected


def test_flattened_total_divisor():
    expected = {3: 1.0 / 3, 4: 10.0 / 3, 5: 84.0 / 3, 6: 160.0 / 3, 7: 256.0 / 3}
    got = aggregate_flattened(fabricated_window_errors(), divisor="total")
    assert got == expected


def test_single_window_identities():
    (we,) = [WindowErrors(1, 10, (3.0, 5.0, 7.0))]
    assert aggregate_summed([we]) == {10: 15.0}
    assert aggregate_flattened([we]) == {10: 3.0, 11: 5.0, 12: 7.0}
    assert aggregate_flattened([we], divisor="total") == {10: 3.0, 11: 5.0, 12: 7.0}


def test_aggregate_dispatch():
    errors = fabricated_window_errors()
    assert aggregate(errors, "summed") == aggregate_summed(errors)
    assert aggregate(errors, "flattened") == aggregate_flattened(errors)
    with pytest.raises(ConfigError):
        aggregate(errors, "averaged")
    with pytest.raises(ConfigError):
        aggregate_flattened(errors, divisor="arbitrary")


# ---------------------------------------------------------------- frame pooling


def test_frame_pool_takes_max_and_fills_zero():
    pooled = frame_pool([{0: 1.0, 2: 5.0}, {0: 3.0, 1: 2.0}], num_frames=4)
    assert pooled.tolist() == [3.0, 2.0, 5.0, 0.0]


def test_frame_pool_rejects_out_of_range():
    with pytest.raises(AlignmentError):
        frame_pool([{5: 1.0}], num_frames=3)


def test_frame_pool_empty():
    assert frame_pool([], num_frames=3).tolist() == [0.0, 0.0, 0.0]
    assert frame_pool([], num_frames=0).size == 0


@given(
    series=st.lists(
        st.dictionaries(st.integers(0, 9), st.floats(0, 100, allow_nan=False), max_size=10),
        max_size=5,
    ),
    extra=st.dictionaries(st.integers(0, 9), st.floats(0, 100, allow_nan=False), max_size=10),
)
def test_adding_a_pedestrian_never_lowers_scores(series, extra):
    base = frame_pool(series, num_frames=10)
    more = frame_pool(series + [extra], num_frames=10)
    assert (more >= base).all()


# ---------------------------------------------------------------- normalization


def test_normalize_min_max():
    out = normalize_per_video(np.array([2.0, 4.0, 6.0]))
    assert out.tolist() == [0.0, 0.5, 1.0]


def test_normalize_constant_is_zeros():
    assert normalize_per_video(np.array([3.0, 3.0, 3.0])).tolist() == [0.0, 0.0, 0.0]


def test_normalize_empty():
    assert normalize_per_video(np.array([])).size == 0


# ------------------------------------------------------------------ pipeline


def test_score_video_counts_and_length():
    tracks = [make_track(range(12), ped=1), make_track(range(6), ped=2)]
    result = score_video(tracks, 3, 3, make_predictor("cv"), "m3")
    assert result.scores.shape == (12,)
    # 12-frame track: 7 windows; 6-frame track: 1 window
    assert result.num_windows == 8


def test_score_video_too_short_yields_zeros():
    tracks = [make_track(range(30))]
    result = score_video(tracks, 25, 25, make_predictor("cv"), "m3")
    assert result.num_windows == 0
    assert result.scores.shape == (30,)
    assert not result.scores.any()


def test_score_video_linear_tracks_score_zero():
    # constant-velocity tracks are predicted exactly: every error is 0
    tracks = [make_track(range(10), ped=1), make_track(range(10), ped=2, step=-1.0)]
    result = score_video(tracks, 3, 3, make_predictor("cv"), "m3")
    assert result.scores == pytest.approx(np.zeros(10), abs=1e-9)


# ------------------------------------------------------------------ score files


def test_score_file_round_trip():
    series = {"vb": np.array([0.5, 1.25, 0.0]), "va": np.array([2.0])}
    buf = io.StringIO()
    write_scores(series, "flattened", "m3", buf, extra_header_lines=["config tau=3"])
    text = buf.getvalue()
    assert text.startswith("#scores v1 kind=flattened measure=m3\n#config tau=3\n")
    # videos written in sorted order
    assert text.index("va,") < text.index("vb,")
    parsed, attrs = parse_scores(text)
    assert attrs == {"kind": "flattened", "measure": "m3"}
    assert parsed["va"].tolist() == [2.0]
    assert parsed["vb"].tolist() == [0.5, 1.25, 0.0]


@pytest.mark.parametrize("text", [
    "not a score file\n",
    "#scores v1 kind=summed measure=m1\nv,0,1.0\nv,2,1.0\n",  # gap at frame 1
    "#scores v1 kind=summed measure=m1\nv,0\n",               # wrong arity
    "#scores v1 kind=summed measure=m1\nv,0,inf\n",           # non-finite
    "#scores v1 kind=summed measure=m1\nv,zero,1.0\n",        # bad frame
])
def test_bad_score_files_rejected(text):
    with pytest.raises(ParseError):
        parse_scores(text)
