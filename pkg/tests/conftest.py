"""Shared fixtures: a tiny dataset with quickly trained models for module
tests, and the full desk-scale pipeline (run once per session through the
CLI commands) for the acceptance gate."""

import time

import numpy as np
import pytest

from gustuq.autoencoder import encoded_targets, train_autoencoder
from gustuq.dataset import build_dataset
from gustuq.gust import FlowCase, GridSpec
from gustuq.network import TrainConfig
from gustuq.pipeline import (
    train_deterministic_estimator,
    train_probabilistic_estimator,
)

TINY_GRID = GridSpec(nx=16, ny=8)


def tiny_cases():
    return [
        FlowCase(0, 20.0),
        FlowCase(1, 40.0),
        FlowCase(2, 60.0),
        FlowCase(3, 60.0, gust_strength=0.9, gust_radius=0.45, gust_y0=-0.1),
        FlowCase(4, 40.0, gust_strength=-0.7, gust_radius=0.35, gust_y0=0.2),
    ]


@pytest.fixture(scope="session")
def tiny_dataset():
    return build_dataset(tiny_cases(), split_seed=7, n_snapshots=80, grid=TINY_GRID)


@pytest.fixture(scope="session")
def tiny_ae(tiny_dataset):
    cfg = TrainConfig(learning_rate=2e-3, weight_decay=0.0, batch_size=64,
                      max_epochs=800, patience=150, rng_seed=1)
    model, trajectories, history = train_autoencoder(tiny_dataset, cfg,
                                                     hidden=(96, 32))
    return {"model": model, "trajectories": trajectories, "history": history}


@pytest.fixture(scope="session")
def tiny_targets(tiny_ae):
    return encoded_targets(tiny_ae["trajectories"])


@pytest.fixture(scope="session")
def tiny_estimators(tiny_dataset, tiny_targets):
    cfg = TrainConfig(learning_rate=1e-3, weight_decay=1e-7, batch_size=128,
                      max_epochs=300, patience=60, rng_seed=2)
    prob, prob_hist = train_probabilistic_estimator(
        tiny_dataset, tiny_targets, cfg, dropout_rate=0.05,
        noise_sigma=float(np.sqrt(2.5e-5)), copies=1)
    det, det_hist = train_deterministic_estimator(tiny_dataset, tiny_targets,
                                                  cfg, dropout_rate=0.05)
    return {"prob": prob, "det": det, "prob_hist": prob_hist,
            "det_hist": det_hist}


# --- desk-scale pipeline (acceptance) ------------------------------------------

DESK_CONFIG = """
preset = desk
seed = 42
# published operating point (defaults restated for the manifest)
dropout_rate = 0.05
weight_decay = 1e-7
T = 100
M = 100
gamma = 0.99
sigma_x2 = 2.5e-5
# desk-scale training budget
learning_rate = 1.5e-3
batch_size = 256
ae_max_epochs = 260
ae_patience = 60
est_max_epochs = 420
est_patience = 80
augment_copies = 1
eval_cases = auto
"""


@pytest.fixture(scope="session")
def desk_pipeline(tmp_path_factory):
    """generate -> train-ae -> train-estimator -> evaluate at desk scale,
    through the CLI entry point, timed."""
    from gustuq import cli

    root = tmp_path_factory.mktemp("desk")
    config_path = root / "run.cfg"
    config_path.write_text(DESK_CONFIG + f"data_dir = {root}\n")
    timings = {}
    t_total = time.perf_counter()
    for command in ("generate", "train-ae", "train-estimator", "evaluate"):
        t0 = time.perf_counter()
        code = cli.main([command, "--config", str(config_path)])
        timings[command] = time.perf_counter() - t0
        assert code == 0, f"{command} failed"
    timings["total"] = time.perf_counter() - t_total
    return {"root": root, "config": config_path, "timings": timings}
