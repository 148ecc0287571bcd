import json

import numpy as np
import pytest

from trajanom import (
    Box,
    ConfigError,
    EPS_BOX,
    NumericError,
    Prediction,
    PredictorConfig,
    WeightError,
    WindowPair,
    constant_velocity_boxes,
    decode_bidirectional,
    encode_history,
    latent_prior,
    load_weights,
    make_predictor,
    predict_bitrap,
    predict_constant_velocity,
    required_tensors,
    save_weights,
    zero_container,
)
from trajanom.predictor import _gru_step
from oracle_utils import oracle_forward, random_container


def window_from_boxes(observed, future, t0=0, ped=1):
    return WindowPair(
        pedestrian_id=ped,
        t_last_observed=t0 + len(observed) - 1,
        observed=tuple(observed),
        future_gt=tuple(future),
        tau=len(observed),
        delta=len(future),
    )


def linear_boxes(n, x0=10.0, vx=2.0, y0=5.0, vy=1.5, w=8.0, h=16.0):
    return [Box(x0 + vx * t, y0 + vy * t, w, h) for t in range(n)]


# ----------------------------------------------------------- constant velocity


def test_linear_track_recovered_exactly():
    obs = linear_boxes(5)
    pred = constant_velocity_boxes(obs, delta=3)
    expected = linear_boxes(8)[5:]
    assert pred == expected


def test_least_squares_line_fit_case():
    # x observations 0,1,2,4 -> OLS slope 1.3, intercept -0.2 -> x(4) = 5.0
    obs = [Box(x, 0.0, 4.0, 4.0) for x in (0.0, 1.0, 2.0, 4.0)]
    (pred,) = constant_velocity_boxes(obs, delta=1)
    assert pred.x == pytest.approx(5.0, abs=1e-12)
    assert pred.y == 0.0
    assert pred.w == 4.0


def test_needs_two_observations():
    with pytest.raises(ConfigError):
        constant_velocity_boxes([Box(0.0, 0.0, 1.0, 1.0)], delta=1)
    with pytest.raises(ConfigError):
        constant_velocity_boxes(linear_boxes(3), delta=0)


def test_shrinking_box_clamped_to_floor():
    obs = [Box(0.0, 0.0, 10.0 - 4.0 * t, 10.0) for t in range(3)]  # w: 10,6,2
    preds = constant_velocity_boxes(obs, delta=3)
    assert preds[0].w == pytest.approx(EPS_BOX)  # raw -2
    assert all(p.w == pytest.approx(EPS_BOX) for p in preds[1:])
    assert all(p.h == 10.0 for p in preds)


def test_predict_constant_velocity_wraps_window():
    obs = linear_boxes(4)
    fut = linear_boxes(7)[4:]
    window = window_from_boxes(obs, fut, t0=10, ped=9)
    pred = predict_constant_velocity(window)
    assert pred.pedestrian_id == 9
    assert pred.t_last_observed == 13
    assert list(pred.boxes) == fut


# ------------------------------------------------------------ weight container


def small_config(**kw):
    defaults = dict(tau=3, delta=3, hidden_size=8, latent_dim=4)
    defaults.update(kw)
    return PredictorConfig(**defaults)


def test_round_trip_bytes_identical():
    container = random_container(small_config(), seed=7)
    blob = save_weights(container)
    again = save_weights(load_weights(blob))
    assert blob == again


def test_container_has_canonical_tensor_set():
    names = [n for n, _ in required_tensors(8, 4)]
    assert len(names) == 32
    container = zero_container(small_config())
    assert list(container.tensors) == names


def test_bad_magic_rejected():
    with pytest.raises(WeightError, match="magic"):
        load_weights(b"NOPE" + b"\x01{}\n")


def test_bad_version_rejected():
    blob = bytearray(save_weights(zero_container(small_config())))
    blob[4] = 9
    with pytest.raises(WeightError, match="version"):
        load_weights(bytes(blob))


def test_malformed_manifest_rejected():
    with pytest.raises(WeightError, match="manifest"):
        load_weights(b"BTLW\x01{not json\n")


def test_missing_manifest_newline_rejected():
    with pytest.raises(WeightError):
        load_weights(b"BTLW\x01{}")


def _split_blob(blob):
    nl = blob.index(b"\n", 5)
    return json.loads(blob[5:nl].decode()), blob[nl + 1:]


def _join_blob(manifest, payload):
    return b"BTLW\x01" + json.dumps(manifest, separators=(",", ":")).encode() + b"\n" + payload


def test_reordered_tensors_rejected():
    blob = save_weights(random_container(small_config(), seed=3))
    manifest, payload = _split_blob(blob)
    manifest["tensors"][0], manifest["tensors"][1] = manifest["tensors"][1], manifest["tensors"][0]
    with pytest.raises(WeightError, match="canonical"):
        load_weights(_join_blob(manifest, payload))


def test_wrong_shape_rejected():
    blob = save_weights(random_container(small_config(), seed=3))
    manifest, payload = _split_blob(blob)
    manifest["tensors"][0][1] = [9, 9]
    with pytest.raises(WeightError):
        load_weights(_join_blob(manifest, payload))


def test_truncated_and_padded_payloads_rejected():
    blob = save_weights(random_container(small_config(), seed=3))
    with pytest.raises(WeightError, match="float32"):
        load_weights(blob[:-8])
    with pytest.raises(WeightError, match="float32"):
        load_weights(blob + b"\x00\x00\x00\x00")


def test_config_must_be_complete():
    blob = save_weights(zero_container(small_config()))
    manifest, payload = _split_blob(blob)
    del manifest["config"]["latent"]
    with pytest.raises(WeightError, match="config"):
        load_weights(_join_blob(manifest, payload))


def test_single_sample_only():
    with pytest.raises(ConfigError):
        PredictorConfig(tau=3, delta=3, num_samples=5)


# ------------------------------------------------------------- forward pass


def test_gru_step_matches_reference_formulas():
    rng = np.random.default_rng(11)
    n, m = 3, 2
    x = rng.normal(size=m)
    h = rng.normal(size=n)
    w_ih = rng.normal(size=(3 * n, m))
    w_hh = rng.normal(size=(3 * n, n))
    b_ih = rng.normal(size=3 * n)
    b_hh = rng.normal(size=3 * n)

    out = _gru_step(x, h, w_ih, w_hh, b_ih, b_hh)

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    for i in range(n):
        r = sig(w_ih[i] @ x + b_ih[i] + w_hh[i] @ h + b_hh[i])
        z = sig(w_ih[n + i] @ x + b_ih[n + i] + w_hh[n + i] @ h + b_hh[n + i])
        c = np.tanh(w_ih[2 * n + i] @ x + b_ih[2 * n + i] + r * (w_hh[2 * n + i] @ h + b_hh[2 * n + i]))
        assert out[i] == pytest.approx((1 - z) * c + z * h[i], rel=1e-12)


def test_zero_weights_predict_last_observed_box():
    container = zero_container(small_config())
    obs = linear_boxes(3)
    window = window_from_boxes(obs, linear_boxes(6)[3:])
    pred = predict_bitrap(window, container)
    assert all(b == obs[-1] for b in pred.boxes)


def test_forward_matches_plain_python_oracle():
    cfg = small_config()
    container = random_container(cfg, seed=42)
    for probe_seed in range(5):
        rng = np.random.default_rng(100 + probe_seed)
        obs = [
            Box(50.0 + 3 * t + rng.normal(), 40.0 + 2 * t + rng.normal(),
                8.0 + 0.1 * t, 16.0)
            for t in range(cfg.tau)
        ]
        window = window_from_boxes(obs, linear_boxes(cfg.tau + cfg.delta)[cfg.tau:])
        engine = predict_bitrap(window, container)
        reference = oracle_forward(container, obs, cfg.delta)
        for eng_box, ref in zip(engine.boxes, reference):
            assert np.allclose(eng_box.as_tuple(), ref, rtol=0.0, atol=1e-5)


def test_translation_equivariance():
    cfg = small_config()
    container = random_container(cfg, seed=9)
    obs = linear_boxes(3)
    fut = linear_boxes(6)[3:]
    base = predict_bitrap(window_from_boxes(obs, fut), container)

    dx, dy = 128.0, -64.0
    shifted_obs = [Box(b.x + dx, b.y + dy, b.w, b.h) for b in obs]
    shifted_fut = [Box(b.x + dx, b.y + dy, b.w, b.h) for b in fut]
    shifted = predict_bitrap(window_from_boxes(shifted_obs, shifted_fut), container)
    for b0, b1 in zip(base.boxes, shifted.boxes):
        assert b1.x == pytest.approx(b0.x + dx, abs=1e-9)
        assert b1.y == pytest.approx(b0.y + dy, abs=1e-9)
        assert b1.w == pytest.approx(b0.w, abs=1e-12)
        assert b1.h == pytest.approx(b0.h, abs=1e-12)


def test_encoder_requires_observations():
    with pytest.raises(ConfigError):
        encode_history([], zero_container(small_config()))


def test_hidden_size_mismatch_rejected():
    container = zero_container(small_config())
    with pytest.raises(WeightError):
        latent_prior(np.zeros(5), container)
    with pytest.raises(WeightError):
        decode_bidirectional(np.zeros(5), np.zeros(4), Box(0, 0, 1, 1), container, 2)
    with pytest.raises(WeightError):
        decode_bidirectional(np.zeros(8), np.zeros(9), Box(0, 0, 1, 1), container, 2)


def test_nonfinite_activations_named_by_stage():
    container = zero_container(small_config())
    container.tensors["enc.gru.b_ih"][:] = np.float32(np.inf)
    container.tensors["enc.gru.b_hh"][:] = np.float32(-np.inf)
    with pytest.raises(NumericError, match="observation step 1"):
        encode_history(linear_boxes(3), container)

    container = zero_container(small_config())
    container.tensors["out.bias"][:] = np.float32(np.inf)
    with pytest.raises(NumericError, match="prediction step 1"):
        decode_bidirectional(np.zeros(8), np.zeros(4), Box(0, 0, 1, 1), container, 2)


def test_width_height_floor_in_decoder():
    container = zero_container(small_config())
    container.tensors["out.bias"][:] = np.array([0, 0, -100, -100], dtype=np.float32)
    boxes = decode_bidirectional(np.zeros(8), np.zeros(4), Box(0.0, 0.0, 5.0, 5.0), container, 2)
    assert all(b.w == EPS_BOX and b.h == EPS_BOX for b in boxes)


# ----------------------------------------------------------------- dispatch


def test_make_predictor_dispatch():
    assert make_predictor("cv") is predict_constant_velocity
    container = zero_container(small_config())
    fn = make_predictor("bitrap", container)
    window = window_from_boxes(linear_boxes(3), linear_boxes(6)[3:])
    assert isinstance(fn(window), Prediction)
    with pytest.raises(ConfigError):
        make_predictor("bitrap")
    with pytest.raises(ConfigError):
        make_predictor("nonsense")
