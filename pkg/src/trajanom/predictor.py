"""Future-box predictors: constant-velocity baseline and a goal-conditioned
bi-directional GRU predictor (CVAE inference path), plus the weight container
they are parameterized by.

Network conventions (fixed so weight files stay portable):

* Per-step input features are the displacement from the previous box plus the
  raw width/height: ``(dx, dy, dw, dh, w, h)``; the first observed step uses
  zero displacement. Outputs are cumulative offsets added to the last
  observed box, so translating the observed window translates the prediction
  by exactly the same amount.
* GRU cells use the two-bias three-gate form with gates packed in
  (reset, update, candidate) order along the first axis::

      r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
      z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
      n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
      h' = (1 - z) * n + z * h

* MLP hidden layers use tanh; every output head is linear. The FC layers in
  front of GRU inputs are linear.
* Inference is deterministic: the latent draw is the prior mean (K=1).

The weight container file starts with magic bytes ``BTLW``, a version byte 1,
one UTF-8 JSON manifest line (tensor name/shape pairs in canonical order plus
the config ints tau/delta/hidden/latent), then the raw little-endian float32
payload in manifest order, row-major.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericError, WeightError
from .ingest import WindowPair
from .trajgeom import Box

__all__ = [
    "EPS_BOX",
    "PredictorConfig",
    "Prediction",
    "LatentParams",
    "WeightContainer",
    "required_tensors",
    "zero_container",
    "save_weights",
    "load_weights",
    "write_weights",
    "read_weights",
    "history_features",
    "encode_history",
    "latent_prior",
    "decode_bidirectional",
    "predict_bitrap",
    "constant_velocity_boxes",
    "predict_constant_velocity",
    "make_predictor",
]

# Lower clamp on predicted width/height; IOU-based measures need positive areas.
EPS_BOX = 1e-3

MAGIC = b"BTLW"
VERSION = 1

FEATURE_DIM = 6  # (dx, dy, dw, dh, w, h)
BOX_DIM = 4


@dataclass(frozen=True)
class PredictorConfig:
    """Shapes and horizons of the learned predictor."""

    tau: int
    delta: int
    hidden_size: int = 256
    latent_dim: int = 32
    num_samples: int = 1

    def __post_init__(self):
        for name in ("tau", "delta", "hidden_size", "latent_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.num_samples != 1:
            raise ConfigError("only deterministic single-sample prediction is supported")


@dataclass(frozen=True)
class Prediction:
    """Predicted future boxes for frames ``t_last_observed+1 ..+len(boxes)``."""

    pedestrian_id: int
    t_last_observed: int
    boxes: tuple[Box, ...]


@dataclass(frozen=True)
class LatentParams:
    """Diagonal Gaussian over the latent conditioning variable."""

    mu: np.ndarray
    log_sigma: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)


def required_tensors(hidden: int, latent: int) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical tensor name/shape list; manifest order is significant."""
    h, l3 = hidden, 3 * hidden
    return [
        ("enc.embed.weight", (h, FEATURE_DIM)),
        ("enc.embed.bias", (h,)),
        ("enc.gru.w_ih", (l3, h)),
        ("enc.gru.w_hh", (l3, h)),
        ("enc.gru.b_ih", (l3,)),
        ("enc.gru.b_hh", (l3,)),
        ("prior.fc1.weight", (h, h)),
        ("prior.fc1.bias", (h,)),
        ("prior.fc2.weight", (h, h)),
        ("prior.fc2.bias", (h,)),
        ("prior.out.weight", (2 * latent, h)),
        ("prior.out.bias", (2 * latent,)),
        ("goal.fc1.weight", (h, h + latent)),
        ("goal.fc1.bias", (h,)),
        ("goal.fc2.weight", (h, h)),
        ("goal.fc2.bias", (h,)),
        ("goal.out.weight", (BOX_DIM, h)),
        ("goal.out.bias", (BOX_DIM,)),
        ("bwd.init.weight", (h, h)),
        ("bwd.init.bias", (h,)),
        ("bwd.gru.w_ih", (l3, BOX_DIM)),
        ("bwd.gru.w_hh", (l3, h)),
        ("bwd.gru.b_ih", (l3,)),
        ("bwd.gru.b_hh", (l3,)),
        ("fwd.embed.weight", (h, BOX_DIM)),
        ("fwd.embed.bias", (h,)),
        ("fwd.gru.w_ih", (l3, h)),
        ("fwd.gru.w_hh", (l3, h)),
        ("fwd.gru.b_ih", (l3,)),
        ("fwd.gru.b_hh", (l3,)),
        ("out.weight", (BOX_DIM, 2 * h)),
        ("out.bias", (BOX_DIM,)),
    ]


@dataclass
class WeightContainer:
    """Named float32 tensors in canonical order plus the config they encode.

    Immutable by convention after load; the float64 views handed to the
    forward passes are cached per tensor.
    """

    config: PredictorConfig
    tensors: dict[str, np.ndarray]
    _f64: dict[str, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    def f64(self, name: str) -> np.ndarray:
        arr = self._f64.get(name)
        if arr is None:
            arr = self.tensors[name].astype(np.float64)
            self._f64[name] = arr
        return arr

    def validate(self) -> None:
        expected = required_tensors(self.config.hidden_size, self.config.latent_dim)
        names = list(self.tensors)
        if names != [n for n, _ in expected]:
            raise WeightError(
                "tensor names/order do not match the required set "
                f"(got {names[:3]}..., expected {[n for n, _ in expected][:3]}...)"
            )
        for name, shape in expected:
            got = self.tensors[name].shape
            if tuple(got) != shape:
                raise WeightError(f"tensor {name!r} has shape {got}, expected {shape}")


def zero_container(config: PredictorConfig) -> WeightContainer:
    tensors = {
        name: np.zeros(shape, dtype=np.float32)
        for name, shape in required_tensors(config.hidden_size, config.latent_dim)
    }
    return WeightContainer(config=config, tensors=tensors)


def save_weights(container: WeightContainer) -> bytes:
    """Serialize a container; save -> load -> save is bit-identical."""
    container.validate()
    manifest = {
        "config": {
            "tau": container.config.tau,
            "delta": container.config.delta,
            "hidden": container.config.hidden_size,
            "latent": container.config.latent_dim,
        },
        "tensors": [[name, list(arr.shape)] for name, arr in container.tensors.items()],
    }
    head = MAGIC + bytes([VERSION]) + json.dumps(manifest, separators=(",", ":")).encode("utf-8") + b"\n"
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f4").tobytes() for arr in container.tensors.values()
    )
    return head + payload


def load_weights(source: bytes | IO[bytes] | str | Path) -> WeightContainer:
    """Parse and validate a weight container.

    Rejects bad magic/version, malformed manifests, names or shapes that
    deviate from the canonical order, and payloads whose float count does
    not match the manifest exactly.
    """
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()

    if len(data) < len(MAGIC) + 1 or data[: len(MAGIC)] != MAGIC:
        raise WeightError("bad magic bytes; not a weight container")
    if data[len(MAGIC)] != VERSION:
        raise WeightError(f"unsupported container version {data[len(MAGIC)]}")
    try:
        nl = data.index(b"\n", len(MAGIC) + 1)
    except ValueError:
        raise WeightError("missing manifest terminator") from None
    try:
        manifest = json.loads(data[len(MAGIC) + 1 : nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightError(f"malformed manifest: {exc}") from None

    cfg = manifest.get("config", {})
    try:
        config = PredictorConfig(
            tau=int(cfg["tau"]),
            delta=int(cfg["delta"]),
            hidden_size=int(cfg["hidden"]),
            latent_dim=int(cfg["latent"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightError(f"bad config block in manifest: {exc}") from None

    entries = manifest.get("tensors")
    if not isinstance(entries, list):
        raise WeightError("manifest missing tensor list")
    expected = required_tensors(config.hidden_size, config.latent_dim)
    declared = [(str(name), tuple(int(d) for d in shape)) for name, shape in entries]
    if declared != expected:
        raise WeightError(
            "manifest tensor names/shapes deviate from the required canonical order"
        )

    payload = data[nl + 1 :]
    total = sum(int(np.prod(shape)) for _, shape in expected)
    if len(payload) != 4 * total:
        raise WeightError(
            f"payload holds {len(payload) // 4} float32 values, expected {total}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in expected:
        count = int(np.prod(shape))
        tensors[name] = flat[offset : offset + count].reshape(shape).copy()
        offset += count
    container = WeightContainer(config=config, tensors=tensors)
    container.validate()
    return container


def write_weights(container: WeightContainer, path: str | Path) -> None:
    Path(path).write_bytes(save_weights(container))


def read_weights(path: str | Path) -> WeightContainer:
    return load_weights(Path(path))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _gru_step(
    x: np.ndarray,
    h: np.ndarray,
    w_ih: np.ndarray,
    w_hh: np.ndarray,
    b_ih: np.ndarray,
    b_hh: np.ndarray,
) -> np.ndarray:
    # non-finite values are detected by the callers, not here
    with np.errstate(invalid="ignore", over="ignore"):
        gi = w_ih @ x + b_ih
        gh = w_hh @ h + b_hh
        n = h.shape[0]
        r = _sigmoid(gi[:n] + gh[:n])
        z = _sigmoid(gi[n : 2 * n] + gh[n : 2 * n])
        cand = np.tanh(gi[2 * n :] + r * gh[2 * n :])
        return (1.0 - z) * cand + z * h


def history_features(observed: Sequence[Box]) -> np.ndarray:
    """Per-step (dx, dy, dw, dh, w, h) features; first displacement is zero."""
    arr = np.array([b.as_tuple() for b in observed], dtype=np.float64)
    feats = np.zeros((len(observed), FEATURE_DIM), dtype=np.float64)
    feats[1:, :BOX_DIM] = arr[1:] - arr[:-1]
    feats[:, BOX_DIM:] = arr[:, 2:4]
    return feats


def _check_hidden(h_t: np.ndarray, weights: WeightContainer, op: str) -> np.ndarray:
    h_t = np.asarray(h_t, dtype=np.float64)
    if h_t.shape != (weights.config.hidden_size,):
        raise WeightError(
            f"{op}: hidden vector has shape {h_t.shape}, "
            f"expected ({weights.config.hidden_size},)"
        )
    return h_t


def encode_history(observed: Sequence[Box], weights: WeightContainer) -> np.ndarray:
    """Run the history encoder: per-step FC embedding, then one GRU layer.

    Returns the final hidden state (length ``hidden_size``).
    """
    if not observed:
        raise ConfigError("encode_history needs at least one observed box")
    w = weights.f64
    feats = history_features(observed)
    h = np.zeros(weights.config.hidden_size, dtype=np.float64)
    for step, f in enumerate(feats, start=1):
        x = w("enc.embed.weight") @ f + w("enc.embed.bias")
        h = _gru_step(x, h, w("enc.gru.w_ih"), w("enc.gru.w_hh"),
                      w("enc.gru.b_ih"), w("enc.gru.b_hh"))
        if not np.all(np.isfinite(h)):
            raise NumericError(f"non-finite hidden state at observation step {step}")
    return h


def latent_prior(h_t: np.ndarray, weights: WeightContainer) -> LatentParams:
    """Map the encoded history to the prior latent Gaussian parameters.

    Three-layer MLP: two tanh hidden layers, linear head emitting the
    concatenated ``(mu, log_sigma)``.
    """
    h_t = _check_hidden(h_t, weights, "latent_prior")
    w = weights.f64
    a = np.tanh(w("prior.fc1.weight") @ h_t + w("prior.fc1.bias"))
    a = np.tanh(w("prior.fc2.weight") @ a + w("prior.fc2.bias"))
    out = w("prior.out.weight") @ a + w("prior.out.bias")
    latent = weights.config.latent_dim
    return LatentParams(mu=out[:latent], log_sigma=out[latent:])


def _goal_offset(h_t: np.ndarray, z: np.ndarray, weights: WeightContainer) -> np.ndarray:
    w = weights.f64
    a = np.tanh(w("goal.fc1.weight") @ np.concatenate([h_t, z]) + w("goal.fc1.bias"))
    a = np.tanh(w("goal.fc2.weight") @ a + w("goal.fc2.bias"))
    return w("goal.out.weight") @ a + w("goal.out.bias")


def decode_bidirectional(
    h_t: np.ndarray,
    z: np.ndarray,
    last_observed: Box,
    weights: WeightContainer,
    delta: int,
) -> list[Box]:
    """Goal-conditioned bi-directional decode of ``delta`` future boxes.

    The goal head (tanh MLP on ``concat(h_t, z)``) emits a goal offset from
    the last observed box. A backward GRU, initialized from a linear map of
    ``h_t``, consumes that goal offset at every step and produces hidden
    states for the frames in reverse order. A forward GRU initialized with
    ``h_t`` consumes a linear embedding of the previous step's emitted
    offset (zero at the first step). At each step the forward and backward
    hidden states are concatenated and a linear head emits a per-step offset
    increment; the predicted box is the last observed box plus the running
    offset sum, with width/height clamped to ``EPS_BOX``.
    """
    if delta < 1:
        raise ConfigError(f"delta must be >= 1, got {delta}")
    h_t = _check_hidden(h_t, weights, "decode_bidirectional")
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (weights.config.latent_dim,):
        raise WeightError(
            f"latent vector has shape {z.shape}, expected ({weights.config.latent_dim},)"
        )
    w = weights.f64

    goal = _goal_offset(h_t, z, weights)
    if not np.all(np.isfinite(goal)):
        raise NumericError("non-finite activation in the goal head")

    # Backward pass: first produced state belongs to the last predicted
    # frame, so index delta-k recovers the state for forward step k.
    hb = w("bwd.init.weight") @ h_t + w("bwd.init.bias")
    backward: list[np.ndarray] = []
    for _ in range(delta):
        hb = _gru_step(goal, hb, w("bwd.gru.w_ih"), w("bwd.gru.w_hh"),
                       w("bwd.gru.b_ih"), w("bwd.gru.b_hh"))
        backward.append(hb)

    hf = h_t
    prev_offset = np.zeros(BOX_DIM, dtype=np.float64)
    cumulative = np.zeros(BOX_DIM, dtype=np.float64)
    last = np.array(last_observed.as_tuple(), dtype=np.float64)
    boxes: list[Box] = []
    for k in range(1, delta + 1):
        x = w("fwd.embed.weight") @ prev_offset + w("fwd.embed.bias")
        hf = _gru_step(x, hf, w("fwd.gru.w_ih"), w("fwd.gru.w_hh"),
                       w("fwd.gru.b_ih"), w("fwd.gru.b_hh"))
        combined = np.concatenate([hf, backward[delta - k]])
        offset = w("out.weight") @ combined + w("out.bias")
        if not np.all(np.isfinite(offset)):
            raise NumericError(f"non-finite offset at prediction step {k}")
        cumulative = cumulative + offset
        vals = last + cumulative
        boxes.append(Box(vals[0], vals[1], max(vals[2], EPS_BOX), max(vals[3], EPS_BOX)))
        prev_offset = offset
    return boxes


def predict_bitrap(window: WindowPair, weights: WeightContainer) -> Prediction:
    """Deterministic prediction: latent fixed at the prior mean (K=1)."""
    h_t = encode_history(window.observed, weights)
    prior = latent_prior(h_t, weights)
    boxes = decode_bidirectional(h_t, prior.mu, window.observed[-1], weights, window.delta)
    return Prediction(window.pedestrian_id, window.t_last_observed, tuple(boxes))


def constant_velocity_boxes(observed: Sequence[Box], delta: int) -> list[Box]:
    """Least-squares linear extrapolation of each box coordinate.

    Fits an ordinary least-squares line per coordinate over the observed
    steps (time 0..tau-1) and evaluates it at tau..tau+delta-1. Width and
    height are clamped to ``EPS_BOX``.
    """
    tau = len(observed)
    if tau < 2:
        raise ConfigError(f"constant-velocity prediction needs tau >= 2, got {tau}")
    if delta < 1:
        raise ConfigError(f"delta must be >= 1, got {delta}")
    arr = np.array([b.as_tuple() for b in observed], dtype=np.float64)
    t = np.arange(tau, dtype=np.float64)
    t_mean = t.mean()
    v_mean = arr.mean(axis=0)
    dt = t - t_mean
    slope = (dt[:, None] * (arr - v_mean)).sum(axis=0) / (dt * dt).sum()

    boxes = []
    for k in range(1, delta + 1):
        vals = v_mean + slope * (tau - 1 + k - t_mean)
        boxes.append(Box(vals[0], vals[1], max(vals[2], EPS_BOX), max(vals[3], EPS_BOX)))
    return boxes


def predict_constant_velocity(window: WindowPair) -> Prediction:
    boxes = constant_velocity_boxes(window.observed, window.delta)
    return Prediction(window.pedestrian_id, window.t_last_observed, tuple(boxes))


def make_predictor(
    kind: str, weights: WeightContainer | None = None
) -> Callable[[WindowPair], Prediction]:
    """Resolve a predictor name (``cv`` or ``bitrap``) to a window->prediction map."""
    if kind == "cv":
        return predict_constant_velocity
    if kind == "bitrap":
        if weights is None:
            raise ConfigError("the bitrap predictor requires a weight container")
        return lambda window: predict_bitrap(window, weights)
    raise ConfigError(f"unknown predictor {kind!r} (expected 'cv' or 'bitrap')")
