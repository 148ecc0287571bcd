"""Shared fixtures: one 200-epoch training run reused by every test that
needs a converged model, so the suite pays its cost once."""

import time

import pytest

from trajanom.synth import SceneSpec, generate
from trajanom_trainer import TrainConfig, train

LINEAR_SPEC = SceneSpec(seed=11, video_id="s", frame_count=140,
                        n_pedestrians=3,
                        frame_width=4000.0, frame_height=4000.0,
                        speed_min=0.9, speed_max=1.6,
                        heading_jitter_std=0.04, center_jitter_std=0.45,
                        spawn_inset_frac=0.3)
LINEAR_CONFIG = TrainConfig(tau=5, delta=5, epochs=200,
                            hidden_size=32, latent_dim=4, seed=5)


@pytest.fixture(scope="session")
def converged_linear_run():
    """(tracks, config, TrainResult, wall seconds) for the near-linear fixture."""
    tracks = generate(LINEAR_SPEC)[0]
    started = time.monotonic()
    result = train(tracks, LINEAR_CONFIG)
    return tracks, LINEAR_CONFIG, result, time.monotonic() - started
