"""Training loop: normal-only windows in, engine-ready weight container out."""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np
import torch

from trajanom.ingest import Track, build_windows
from trajanom.predictor import PredictorConfig, WeightContainer, save_weights

from .model import BiTrapLite, gaussian_kl, to_container

__all__ = [
    "TrainConfig",
    "LogEntry",
    "TrainResult",
    "TrainingDiverged",
    "windows_to_arrays",
    "split_train_val",
    "training_loss",
    "train",
    "write_log",
    "export_weights",
]


class TrainingDiverged(RuntimeError):
    """Raised when the loss turns non-finite; carries the log so far."""

    def __init__(self, message: str, log: list["LogEntry"]):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class TrainConfig:
    tau: int
    delta: int
    epochs: int
    hidden_size: int = 256
    latent_dim: int = 32
    learning_rate: float = 0.001
    batch_size: int = 30
    val_fraction: float = 0.3
    seed: int = 0
    # blend the KL term in linearly over this fraction of optimizer steps
    kl_anneal_fraction: float = 0.1
    # plateau scheduler: halve the lr when val loss fails to improve by
    # plateau_threshold for plateau_patience consecutive epochs
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    plateau_threshold: float = 1e-4

    def __post_init__(self):
        if self.tau < 1 or self.delta < 1:
            raise ValueError("tau and delta must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.hidden_size < 1 or self.latent_dim < 1:
            raise ValueError("hidden_size and latent_dim must be >= 1")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning_rate and batch_size must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if not 0.0 <= self.kl_anneal_fraction <= 1.0:
            raise ValueError("kl_anneal_fraction must be in [0, 1]")

    def predictor_config(self) -> PredictorConfig:
        return PredictorConfig(tau=self.tau, delta=self.delta,
                               hidden_size=self.hidden_size,
                               latent_dim=self.latent_dim)


@dataclass(frozen=True)
class LogEntry:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainResult:
    container: WeightContainer
    log: list[LogEntry] = field(default_factory=list)


def windows_to_arrays(
    tracks: Iterable[Track], tau: int, delta: int
) -> tuple[np.ndarray, np.ndarray]:
    """Slice tracks into (observed, future) arrays of shape (n, tau|delta, 4)."""
    obs, fut = [], []
    for track in tracks:
        for window in build_windows(track, tau, delta):
            obs.append([b.as_tuple() for b in window.observed])
            fut.append([b.as_tuple() for b in window.future_gt])
    if not obs:
        return (np.zeros((0, tau, 4)), np.zeros((0, delta, 4)))
    return np.asarray(obs, dtype=np.float64), np.asarray(fut, dtype=np.float64)


def split_train_val(
    n: int, val_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled split; both sides non-empty."""
    if n < 2:
        raise ValueError(f"need at least 2 windows to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = min(n - 1, max(1, round(n * val_fraction)))
    return perm[n_val:], perm[:n_val]


def training_loss(
    model: BiTrapLite,
    observed: torch.Tensor,
    future: torch.Tensor,
    kl_weight: float = 1.0,
    noise: torch.Tensor | None = None,
) -> dict[str, torch.Tensor]:
    """Goal L2 + per-step trajectory L2 + weighted KL(posterior || prior).

    The three terms carry unit weights; only the KL is scaled (annealing).
    Passing an explicit ``noise`` tensor makes the loss a deterministic
    function of the parameters, which the gradient checks rely on.
    """
    out = model(observed, future, noise=noise)
    goal_target = future[:, -1] - observed[:, -1]
    goal = ((out["goal_offset"] - goal_target) ** 2).sum(dim=-1).mean()
    traj = ((out["boxes"] - future) ** 2).sum(dim=-1).mean()
    kl = gaussian_kl(out["post_mu"], out["post_log_sigma"],
                     out["prior_mu"], out["prior_log_sigma"]).mean()
    total = goal + traj + kl_weight * kl
    return {"total": total, "goal": goal, "traj": traj, "kl": kl}


def _validation_loss(model: BiTrapLite, observed: torch.Tensor,
                     future: torch.Tensor, batch_size: int) -> float:
    """Full-weight loss with the posterior mean (no sampling noise)."""
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, observed.shape[0], batch_size):
            obs = observed[start:start + batch_size]
            fut = future[start:start + batch_size]
            zeros = obs.new_zeros(obs.shape[0], model.config.latent_dim)
            parts = training_loss(model, obs, fut, kl_weight=1.0, noise=zeros)
            total += float(parts["total"]) * obs.shape[0]
            count += obs.shape[0]
    model.train()
    return total / count


def train(tracks: Sequence[Track], config: TrainConfig) -> TrainResult:
    """Optimize the CVAE on normal-only tracks; returns the exported-shape
    container (posterior branch dropped) plus the per-epoch log.

    Deterministic for a fixed config: model init, split, batch order, and
    sampling noise all derive from ``config.seed``. A zero-epoch run returns
    the seeded initialization untouched.
    """
    torch.manual_seed(config.seed)
    model = BiTrapLite(config.predictor_config())
    model.train()

    log: list[LogEntry] = []
    if config.epochs == 0:
        return TrainResult(container=to_container(model), log=log)

    obs_np, fut_np = windows_to_arrays(tracks, config.tau, config.delta)
    train_idx, val_idx = split_train_val(len(obs_np), config.val_fraction, config.seed)
    obs = torch.from_numpy(obs_np).to(torch.float32)
    fut = torch.from_numpy(fut_np).to(torch.float32)
    train_obs, train_fut = obs[train_idx], fut[train_idx]
    val_obs, val_fut = obs[val_idx], fut[val_idx]

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, factor=config.plateau_factor, patience=config.plateau_patience,
        threshold=config.plateau_threshold, threshold_mode="abs")

    batches_per_epoch = math.ceil(train_obs.shape[0] / config.batch_size)
    total_steps = config.epochs * batches_per_epoch
    anneal_steps = max(1, int(round(total_steps * config.kl_anneal_fraction)))
    shuffler = torch.Generator().manual_seed(config.seed)

    step = 0
    for epoch in range(1, config.epochs + 1):
        perm = torch.randperm(train_obs.shape[0], generator=shuffler)
        epoch_loss, seen = 0.0, 0
        for start in range(0, train_obs.shape[0], config.batch_size):
            batch = perm[start:start + config.batch_size]
            kl_weight = min(1.0, (step + 1) / anneal_steps)
            parts = training_loss(model, train_obs[batch], train_fut[batch],
                                  kl_weight=kl_weight)
            loss = parts["total"]
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} step {step}", log)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach()) * len(batch)
            seen += len(batch)
            step += 1

        val_loss = _validation_loss(model, val_obs, val_fut, config.batch_size)
        if not math.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}", log)
        scheduler.step(val_loss)
        log.append(LogEntry(epoch=epoch, train_loss=epoch_loss / seen,
                            val_loss=val_loss, lr=optimizer.param_groups[0]["lr"]))

    return TrainResult(container=to_container(model), log=log)


def write_log(log: Sequence[LogEntry], stream: IO[str]) -> None:
    stream.write("#trainlog v1\n")
    stream.write("epoch,train_loss,val_loss,lr\n")
    for entry in log:
        stream.write(f"{entry.epoch},{entry.train_loss!r},{entry.val_loss!r},{entry.lr!r}\n")


def export_weights(container: WeightContainer, path: str | Path) -> None:
    """Atomic write: the container appears at ``path`` complete or not at all."""
    path = Path(path)
    blob = save_weights(container)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."),
                                    prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise
