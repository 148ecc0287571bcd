"""Torch version of the box-trajectory CVAE, kept in lockstep with the engine.

The engine runs a numpy forward pass over a fixed 32-tensor container; this
module holds the same computation as differentiable torch code plus the
posterior (future-encoder) branch that exists only during training. Every
exported tensor maps 1:1 onto a container entry, so the name map below is the
single source of truth for export and import.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from trajanom.predictor import (
    BOX_DIM,
    EPS_BOX,
    FEATURE_DIM,
    PredictorConfig,
    WeightContainer,
    required_tensors,
)

__all__ = [
    "BiTrapLite",
    "history_features",
    "future_offsets",
    "gaussian_kl",
    "to_container",
    "load_container_into",
]

# container tensor name -> module attribute; GRU entries expand to the four
# (w_ih, w_hh, b_ih, b_hh) tensors with torch's native packed (r, z, n) layout
_LINEAR_MAP = {
    "enc.embed": "enc_embed",
    "prior.fc1": "prior_fc1",
    "prior.fc2": "prior_fc2",
    "prior.out": "prior_out",
    "goal.fc1": "goal_fc1",
    "goal.fc2": "goal_fc2",
    "goal.out": "goal_out",
    "bwd.init": "bwd_init",
    "fwd.embed": "fwd_embed",
    "out": "out",
}
_GRU_MAP = {"enc.gru": "enc_gru", "bwd.gru": "bwd_gru", "fwd.gru": "fwd_gru"}
_GRU_FIELDS = {"w_ih": "weight_ih", "w_hh": "weight_hh",
               "b_ih": "bias_ih", "b_hh": "bias_hh"}


def history_features(observed: torch.Tensor) -> torch.Tensor:
    """(B, tau, 4) observed boxes -> (B, tau, 6) features.

    Per step: box displacement from the previous frame (zero at the first)
    followed by the current width and height.
    """
    feats = observed.new_zeros(observed.shape[0], observed.shape[1], FEATURE_DIM)
    feats[:, 1:, :BOX_DIM] = observed[:, 1:] - observed[:, :-1]
    feats[:, :, BOX_DIM:] = observed[:, :, 2:4]
    return feats


def future_offsets(observed: torch.Tensor, future: torch.Tensor) -> torch.Tensor:
    """Per-step future box displacements, the first taken from the last
    observed box; input to the posterior future-encoder only."""
    prev = torch.cat([observed[:, -1:], future[:, :-1]], dim=1)
    return future - prev


def gaussian_kl(mu_q: torch.Tensor, log_sigma_q: torch.Tensor,
                mu_p: torch.Tensor, log_sigma_p: torch.Tensor) -> torch.Tensor:
    """KL(q || p) between diagonal Gaussians parameterized by log std;
    summed over latent dims, one value per batch row. Exactly zero when the
    parameters coincide."""
    var_q = torch.exp(2.0 * log_sigma_q)
    var_p = torch.exp(2.0 * log_sigma_p)
    kl = log_sigma_p - log_sigma_q + (var_q + (mu_q - mu_p) ** 2) / (2.0 * var_p) - 0.5
    return kl.sum(dim=-1)


class BiTrapLite(nn.Module):
    """History encoder, latent prior/posterior, and goal-conditioned
    bi-directional decoder over box offsets."""

    def __init__(self, config: PredictorConfig):
        super().__init__()
        self.config = config
        h, latent = config.hidden_size, config.latent_dim

        self.enc_embed = nn.Linear(FEATURE_DIM, h)
        self.enc_gru = nn.GRUCell(h, h)

        self.prior_fc1 = nn.Linear(h, h)
        self.prior_fc2 = nn.Linear(h, h)
        self.prior_out = nn.Linear(h, 2 * latent)

        self.goal_fc1 = nn.Linear(h + latent, h)
        self.goal_fc2 = nn.Linear(h, h)
        self.goal_out = nn.Linear(h, BOX_DIM)

        self.bwd_init = nn.Linear(h, h)
        self.bwd_gru = nn.GRUCell(BOX_DIM, h)

        self.fwd_embed = nn.Linear(BOX_DIM, h)
        self.fwd_gru = nn.GRUCell(h, h)
        self.out = nn.Linear(2 * h, BOX_DIM)

        # training-only posterior branch: future-encoder GRU + MLP head;
        # never exported, the engine has no slots for it
        self.post_embed = nn.Linear(BOX_DIM, h)
        self.post_gru = nn.GRUCell(h, h)
        self.post_fc1 = nn.Linear(2 * h, h)
        self.post_fc2 = nn.Linear(h, h)
        self.post_out = nn.Linear(h, 2 * latent)

    # -- pieces mirroring the engine ops ---------------------------------

    def encode(self, observed: torch.Tensor) -> torch.Tensor:
        feats = history_features(observed)
        h = observed.new_zeros(observed.shape[0], self.config.hidden_size)
        for t in range(feats.shape[1]):
            h = self.enc_gru(self.enc_embed(feats[:, t]), h)
        return h

    def prior(self, h_t: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        a = torch.tanh(self.prior_fc1(h_t))
        a = torch.tanh(self.prior_fc2(a))
        out = self.prior_out(a)
        latent = self.config.latent_dim
        return out[:, :latent], out[:, latent:]

    def posterior(self, h_t: torch.Tensor, observed: torch.Tensor,
                  future: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        offsets = future_offsets(observed, future)
        hy = h_t.new_zeros(h_t.shape)
        for t in range(offsets.shape[1]):
            hy = self.post_gru(self.post_embed(offsets[:, t]), hy)
        a = torch.tanh(self.post_fc1(torch.cat([h_t, hy], dim=-1)))
        a = torch.tanh(self.post_fc2(a))
        out = self.post_out(a)
        latent = self.config.latent_dim
        return out[:, :latent], out[:, latent:]

    def goal(self, h_t: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        a = torch.tanh(self.goal_fc1(torch.cat([h_t, z], dim=-1)))
        a = torch.tanh(self.goal_fc2(a))
        return self.goal_out(a)

    def decode(self, h_t: torch.Tensor, z: torch.Tensor,
               last_box: torch.Tensor, delta: int) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (goal_offset, boxes) with boxes shaped (B, delta, 4).

        Matches the engine step for step: the backward GRU consumes the goal
        offset at every step (its first state belongs to the last predicted
        frame), the forward GRU consumes the embedded previous raw offset,
        and the emitted box is the last observed box plus the running offset
        sum with width/height floored at EPS_BOX. The clamp touches only the
        emitted box, never the offset chain.
        """
        goal_offset = self.goal(h_t, z)

        hb = self.bwd_init(h_t)
        backward = []
        for _ in range(delta):
            hb = self.bwd_gru(goal_offset, hb)
            backward.append(hb)

        hf = h_t
        prev = last_box.new_zeros(last_box.shape[0], BOX_DIM)
        cumulative = last_box.new_zeros(last_box.shape[0], BOX_DIM)
        boxes = []
        for k in range(1, delta + 1):
            hf = self.fwd_gru(self.fwd_embed(prev), hf)
            offset = self.out(torch.cat([hf, backward[delta - k]], dim=-1))
            cumulative = cumulative + offset
            vals = last_box + cumulative
            boxes.append(torch.cat(
                [vals[:, :2], torch.clamp(vals[:, 2:4], min=EPS_BOX)], dim=-1))
            prev = offset
        return goal_offset, torch.stack(boxes, dim=1)

    # -- full passes ------------------------------------------------------

    def forward(self, observed: torch.Tensor, future: torch.Tensor,
                noise: torch.Tensor | None = None) -> dict[str, torch.Tensor]:
        """Training pass: reparameterized draw from the posterior."""
        h_t = self.encode(observed)
        prior_mu, prior_ls = self.prior(h_t)
        post_mu, post_ls = self.posterior(h_t, observed, future)
        if noise is None:
            noise = torch.randn_like(post_mu)
        z = post_mu + torch.exp(post_ls) * noise
        goal_offset, boxes = self.decode(h_t, z, observed[:, -1], future.shape[1])
        return {
            "goal_offset": goal_offset,
            "boxes": boxes,
            "prior_mu": prior_mu,
            "prior_log_sigma": prior_ls,
            "post_mu": post_mu,
            "post_log_sigma": post_ls,
        }

    @torch.no_grad()
    def predict(self, observed: torch.Tensor, delta: int) -> torch.Tensor:
        """Inference pass as the engine runs it: z fixed at the prior mean."""
        h_t = self.encode(observed)
        prior_mu, _ = self.prior(h_t)
        _, boxes = self.decode(h_t, prior_mu, observed[:, -1], delta)
        return boxes


def _resolve(model: BiTrapLite, name: str) -> torch.Tensor:
    head, _, field = name.rpartition(".")
    if head in _LINEAR_MAP:
        return getattr(getattr(model, _LINEAR_MAP[head]), field)
    if head in _GRU_MAP:
        return getattr(getattr(model, _GRU_MAP[head]), _GRU_FIELDS[field])
    raise KeyError(f"tensor {name!r} has no torch counterpart")


def to_container(model: BiTrapLite) -> WeightContainer:
    """Snapshot the inference tensors (posterior branch excluded) into the
    engine's container, in canonical order."""
    config = model.config
    tensors = {}
    for name, shape in required_tensors(config.hidden_size, config.latent_dim):
        value = _resolve(model, name).detach().cpu().numpy().astype(np.float32)
        if value.shape != shape:
            raise ValueError(f"{name}: trained shape {value.shape}, container wants {shape}")
        tensors[name] = value
    return WeightContainer(config=config, tensors=tensors)


def load_container_into(model: BiTrapLite, container: WeightContainer) -> BiTrapLite:
    """Copy container tensors into the matching torch parameters (the
    posterior branch keeps its current values)."""
    if (container.config.hidden_size, container.config.latent_dim) != (
            model.config.hidden_size, model.config.latent_dim):
        raise ValueError("container dimensions do not match the model")
    with torch.no_grad():
        for name, _ in required_tensors(model.config.hidden_size,
                                        model.config.latent_dim):
            param = _resolve(model, name)
            param.copy_(torch.from_numpy(container.tensors[name].copy()))
    return model
