"""Small end-to-end uncertainty run, library-only (no CLI).

Builds a small dataset, trains the autoencoder and both estimators on a
short budget, then walks one held-out snapshot through the full machinery:
Gramian -> structured noise -> 100 dropout passes -> aleatoric/epistemic
distributions -> plane ellipses -> decoded field statistics and the
pixel-averaged log-likelihood. Takes about a minute.

Run: python3 demos/04_uncertainty_pipeline.py
"""

import numpy as np

from gustuq.autoencoder import encoded_targets, train_autoencoder
from gustuq.dataset import build_dataset
from gustuq.gust import FlowCase, GridSpec
from gustuq.network import TrainConfig
from gustuq.pipeline import (
    InferenceSettings,
    evaluate_case,
    infer_snapshot,
    train_deterministic_estimator,
    train_probabilistic_estimator,
)

grid = GridSpec(nx=16, ny=8)
cases = [FlowCase(0, 20.0), FlowCase(1, 40.0), FlowCase(2, 60.0),
         FlowCase(3, 60.0, gust_strength=0.9, gust_radius=0.45, gust_y0=-0.1),
         FlowCase(4, 40.0, gust_strength=-0.7, gust_radius=0.35, gust_y0=0.2)]
ds = build_dataset(cases, split_seed=7, n_snapshots=80, grid=grid)
print(f"dataset: {len(ds)} snapshots ({ds.val_indices().size} held out)")

ae_cfg = TrainConfig(learning_rate=2e-3, batch_size=64, max_epochs=400,
                     patience=80, rng_seed=1)
ae, trajectories, ae_hist = train_autoencoder(ds, ae_cfg, hidden=(96, 32))
targets = encoded_targets(trajectories)
print(f"autoencoder: best val loss {ae_hist.best_val:.4f} "
      f"({ae_hist.epochs_run} epochs)")

est_cfg = TrainConfig(learning_rate=1e-3, weight_decay=1e-7, batch_size=128,
                      max_epochs=250, patience=50, rng_seed=2)
prob, prob_hist = train_probabilistic_estimator(
    ds, targets, est_cfg, dropout_rate=0.05, noise_sigma=np.sqrt(2.5e-5))
det, det_hist = train_deterministic_estimator(ds, targets, est_cfg,
                                              dropout_rate=0.05)
print(f"estimators: prob val NLL {prob_hist.best_val:.3f}, "
      f"det val MSE {det_hist.best_val:.4f}")

settings = InferenceSettings(seed=5, T=100, M=100)
row = int(ds.val_indices()[3])
inf = infer_snapshot(prob, det, ds, row, settings)
print(f"\nheld-out snapshot (case {inf.case_id}), retained noise modes: {inf.rank}")
print(f"  leading Gramian share: {inf.gramian.energy_share(1):.3f} "
      f"(first two: {inf.gramian.energy_share(2):.3f})")
for kind, dist in (("aleatoric", inf.aleatoric), ("epistemic", inf.epistemic)):
    sig = np.sqrt(np.diag(dist.covariance))
    print(f"  {kind:10s} mean {np.round(dist.mean, 3)}  sigma {np.round(sig, 3)}")
print(f"  encoded truth      {np.round(targets[row], 3)}")

reports = evaluate_case(ds, inf.case_id, ae, prob, det, targets, settings)
r = next(r for r in reports if r.kind == "aleatoric"
         and r.time_index == int(np.flatnonzero(ds.case_indices(inf.case_id) == row)[0]))
print(f"\ndecoded field statistics ({r.kind}): lift {r.lift_mean:.3f} "
      f"+-{r.lift_two_sigma:.3f} (truth {r.lift_truth:.3f}), "
      f"avg log-likelihood {r.avg_ll:.2f}")
e = r.ellipses[(0, 1)]
print(f"xi1-xi2 95% ellipse: semi-axes {np.round(e.semi_axes, 3)}, "
      f"angle {e.angle:.2f} rad")
