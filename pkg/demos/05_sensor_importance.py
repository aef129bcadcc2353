"""Which sensors carry the information?

Trains the deterministic estimator on a small dataset and tracks the leading
eigenmode of the measurement-space Gramian over one shedding cycle of the
undisturbed 60-degree case: the dominant pressure taps rotate with the
vortex pattern. Writes a bar-panel SVG next to this script.

Run: python3 demos/05_sensor_importance.py
"""

import os

import numpy as np

from gustuq.autoencoder import encoded_targets, train_autoencoder
from gustuq.dataset import build_dataset
from gustuq.gust import FlowCase, GridSpec
from gustuq.network import TrainConfig
from gustuq.pipeline import (
    InferenceSettings,
    sensitivity_series,
    train_deterministic_estimator,
)
from gustuq.svgplot import sensor_bars_svg

grid = GridSpec(nx=16, ny=8)
cases = [FlowCase(0, 20.0), FlowCase(1, 40.0), FlowCase(2, 60.0),
         FlowCase(3, 60.0, gust_strength=0.9, gust_radius=0.45, gust_y0=-0.1)]
ds = build_dataset(cases, split_seed=7, n_snapshots=80, grid=grid)

ae_cfg = TrainConfig(learning_rate=2e-3, batch_size=64, max_epochs=300,
                     patience=60, rng_seed=1)
_, trajectories, _ = train_autoencoder(ds, ae_cfg, hidden=(96, 32))
targets = encoded_targets(trajectories)

est_cfg = TrainConfig(learning_rate=1e-3, weight_decay=1e-7, batch_size=128,
                      max_epochs=250, patience=50, rng_seed=2)
det, hist = train_deterministic_estimator(ds, targets, est_cfg, dropout_rate=0.05)
print(f"deterministic estimator: val MSE {hist.best_val:.4f}")

settings = InferenceSettings(seed=9, gramian_samples=100)
rows = sensitivity_series(ds, 2, det, settings, n_modes=2)
lead = [r for r in rows if r[1] == 0]
shares = np.array([r[2] for r in lead])
print(f"leading-mode energy share over the case: min {shares.min():.2f}, "
      f"mean {shares.mean():.2f}")

case = ds.case(2)
per_period = max(1, int(round(case.orbit_period / (ds.times[1] - ds.times[0]))))
picks = lead[: per_period : max(1, per_period // 6)][:6]
print("bars over one shedding period (sensor 1 = upper trailing edge):")
for tidx, _, share, w in picks:
    strongest = int(np.argmax(np.abs(w))) + 1
    print(f"  t index {tidx:3d}: share {share:.2f}, strongest sensor {strongest}")

out = os.path.join(os.path.dirname(__file__), "sensor_importance.svg")
sensor_bars_svg(out, [(f"t index {r[0]}", r[3]) for r in picks],
                "leading Gramian mode over one shedding period")
print(f"wrote {out}")
