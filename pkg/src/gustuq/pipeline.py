"""End-to-end orchestration shared by the command-line harness and tests:
estimator training on encoded-latent targets, per-snapshot uncertainty
inference, evaluation report assembly, and sensor-importance series.

Every stochastic step derives its RNG stream from (seed, purpose code, case,
time index), so outputs are reproducible regardless of which subset of cases
is evaluated or in which order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoencoder import AutoencoderModel
from .dataset import Dataset, augment_noise
from .errors import DataMismatchError
from .gaussian import HeteroscedasticNllLoss, LatentDistribution
from .gramian import (
    GramianResult,
    iid_pressure_noise,
    measurement_gramian,
    noise_model_from_gramian,
    sensor_importance,
    structured_noise,
)
from .network import MseLoss, Network, SplitData, TrainConfig, estimator_spec, train
from .uncertainty import (
    aleatoric_distribution,
    confidence_ellipse,
    ellipsoid_quantile,
    epistemic_distribution,
    mahalanobis_sq,
    mc_predict,
    reconstruct_stats,
    avg_loglikelihood,
)

LATENT_DIM = 3
PLANES = ((0, 1), (0, 2), (1, 2))

# rng purpose codes
_RNG_TRAIN_PROB = 11
_RNG_TRAIN_DET = 12
_RNG_AUGMENT = 13
_RNG_GRAMIAN = 21
_RNG_MC = 22
_RNG_SAMPLE_A = 23
_RNG_SAMPLE_E = 24


def derive_rng(seed, *codes):
    return np.random.default_rng([int(seed)] + [int(c) for c in codes])


# --- estimator training -------------------------------------------------------


def check_targets_match(dataset: Dataset, target_case_ids, targets):
    if targets.shape != (len(dataset), LATENT_DIM):
        raise DataMismatchError(
            f"latent targets have shape {targets.shape}, dataset has "
            f"{len(dataset)} snapshots"
        )
    if not np.array_equal(np.asarray(target_case_ids), dataset.case_ids):
        raise DataMismatchError("latent target rows are not in dataset order")


def train_probabilistic_estimator(dataset: Dataset, targets, cfg: TrainConfig,
                                  dropout_rate, noise_sigma, copies=1):
    """NLL-head estimator on noise-augmented inputs; targets are the encoded
    latent trajectories (clean, shared by all noisy copies of a row)."""
    aug = augment_noise(dataset, noise_sigma,
                        derive_rng(cfg.rng_seed, _RNG_AUGMENT), copies=copies)
    y = np.concatenate([targets] * (copies + 1))
    tr, va = aug.train_indices(), aug.val_indices()
    data = SplitData(aug.p_stacked[tr], y[tr], aug.p_stacked[va], y[va])
    net = Network(estimator_spec(dataset.layout.stacked_dim, LATENT_DIM,
                                 probabilistic=True, dropout_rate=dropout_rate),
                  rng=derive_rng(cfg.rng_seed, _RNG_TRAIN_PROB))
    history = train(net, data, HeteroscedasticNllLoss(LATENT_DIM), cfg)
    return net, history


def train_deterministic_estimator(dataset: Dataset, targets, cfg: TrainConfig,
                                  dropout_rate):
    """Mean-only estimator on clean inputs with an MSE loss, the Jacobian
    carrier for the Gramian analysis (dropout disabled at evaluation)."""
    tr, va = dataset.train_indices(), dataset.val_indices()
    data = SplitData(dataset.p_stacked[tr], targets[tr],
                     dataset.p_stacked[va], targets[va])
    net = Network(estimator_spec(dataset.layout.stacked_dim, LATENT_DIM,
                                 probabilistic=False, dropout_rate=dropout_rate),
                  rng=derive_rng(cfg.rng_seed, _RNG_TRAIN_DET))
    history = train(net, data, MseLoss(), cfg)
    return net, history


# --- per-snapshot inference -----------------------------------------------------


@dataclass
class InferenceSettings:
    seed: int = 0
    T: int = 100
    M: int = 100
    gamma: float = 0.99
    sigma_x2: float = 2.5e-5
    gramian_samples: int = 100


@dataclass
class SnapshotInference:
    case_id: int
    gramian: GramianResult
    rank: int
    aleatoric: LatentDistribution
    epistemic: LatentDistribution


def snapshot_gramian(det_net, dataset: Dataset, row, settings) -> GramianResult:
    rng = derive_rng(settings.seed, _RNG_GRAMIAN, dataset.case_ids[row], row)
    sampler = iid_pressure_noise(dataset.layout, settings.sigma_x2)
    return measurement_gramian(det_net, dataset.p_stacked[row], sampler,
                               settings.gramian_samples, rng)


def infer_snapshot(prob_net, det_net, dataset: Dataset, row,
                   settings: InferenceSettings) -> SnapshotInference:
    """The full uncertainty pipeline at one snapshot: a Gramian around the
    clean input, structured noise along its leading modes, T stochastic
    passes, and both predictive distributions."""
    case_id = int(dataset.case_ids[row])
    gram = snapshot_gramian(det_net, dataset, row, settings)
    model = noise_model_from_gramian(gram, settings.gamma, settings.sigma_x2,
                                     dataset.layout.coordinate_slots)
    rng = derive_rng(settings.seed, _RNG_MC, case_id, row)
    ens = mc_predict(prob_net, dataset.p_stacked[row], settings.T, rng,
                     input_noise=lambda r, n: structured_noise(model, r, n))
    return SnapshotInference(
        case_id=case_id,
        gramian=gram,
        rank=model.rank,
        aleatoric=aleatoric_distribution(ens),
        epistemic=epistemic_distribution(ens),
    )


# --- evaluation ------------------------------------------------------------------


@dataclass
class SnapshotReport:
    case_id: int
    time_index: int
    kind: str
    lift_truth: float
    lift_mean: float
    lift_two_sigma: float
    avg_ll: float
    pixel_var_mean: float
    pixel_var_max: float
    mahalanobis_sq: float
    ellipses: dict  # plane -> EllipseSpec
    latent_mean: np.ndarray
    latent_trace: float


def evaluate_case(dataset: Dataset, case_id, ae: AutoencoderModel, prob_net,
                  det_net, targets, settings: InferenceSettings):
    """Every snapshot of one case, both uncertainty kinds.

    Returns a list of SnapshotReport; the truth for the latent ellipsoid
    check is the autoencoder-encoded latent (the estimator's target), the
    truth for the field log-likelihood is the generator's vorticity window.
    """
    rows = dataset.case_indices(case_id)
    reports = []
    decode = ae.decoder_fn()
    for tidx, row in enumerate(rows):
        inf = infer_snapshot(prob_net, det_net, dataset, row, settings)
        for kind, dist, code in (("aleatoric", inf.aleatoric, _RNG_SAMPLE_A),
                                 ("epistemic", inf.epistemic, _RNG_SAMPLE_E)):
            rng = derive_rng(settings.seed, code, case_id, row)
            stats = reconstruct_stats(dist, decode, settings.M, rng)
            reports.append(SnapshotReport(
                case_id=int(case_id),
                time_index=tidx,
                kind=kind,
                lift_truth=float(dataset.lift[row]),
                lift_mean=stats.lift_mean,
                lift_two_sigma=2.0 * float(np.sqrt(max(stats.lift_var, 0.0))),
                avg_ll=avg_loglikelihood(stats, dataset.omega[row]),
                pixel_var_mean=float(stats.pixel_var.mean()),
                pixel_var_max=float(stats.pixel_var.max()),
                mahalanobis_sq=mahalanobis_sq(dist, targets[row]),
                ellipses={p: confidence_ellipse(dist, p) for p in PLANES},
                latent_mean=dist.mean.copy(),
                latent_trace=float(np.trace(dist.covariance)),
            ))
    return reports


def flag_max_uncertainty(reports):
    """Per (case, kind), mark the snapshot with the largest latent-covariance
    trace; mirrors highlighting the thickest ellipse."""
    flags = {}
    best = {}
    for i, r in enumerate(reports):
        key = (r.case_id, r.kind)
        if key not in best or r.latent_trace > reports[best[key]].latent_trace:
            best[key] = i
    for i, r in enumerate(reports):
        flags[i] = 1 if best[(r.case_id, r.kind)] == i else 0
    return flags


def ellipsoid_coverage(dataset: Dataset, rows, prob_net, det_net, targets,
                       settings: InferenceSettings, level=0.95):
    """Fraction of rows whose encoded-latent truth falls inside the `level`
    confidence ellipsoid, for both uncertainty kinds, overall and per case.

    Returns {kind: (overall fraction, {case_id: (inside, total)})}.
    """
    threshold = ellipsoid_quantile(level, LATENT_DIM)
    out = {kind: [0, {}] for kind in ("aleatoric", "epistemic")}
    for row in rows:
        inf = infer_snapshot(prob_net, det_net, dataset, row, settings)
        cid = int(dataset.case_ids[row])
        for kind, dist in (("aleatoric", inf.aleatoric),
                           ("epistemic", inf.epistemic)):
            inside = mahalanobis_sq(dist, targets[row]) <= threshold
            out[kind][0] += int(inside)
            n_in, n_all = out[kind][1].get(cid, (0, 0))
            out[kind][1][cid] = (n_in + int(inside), n_all + 1)
    n = max(len(rows), 1)
    return {kind: (total / n, per_case) for kind, (total, per_case) in out.items()}


# --- sensitivity series -----------------------------------------------------------


def sensitivity_series(dataset: Dataset, case_id, det_net,
                       settings: InferenceSettings, n_modes=2):
    """Per-snapshot Gramian mode shares and 11-sensor bar weights."""
    rows = dataset.case_indices(case_id)
    out = []
    for tidx, row in enumerate(rows):
        gram = snapshot_gramian(det_net, dataset, row, settings)
        total = gram.eigenvalues.sum()
        for mode in range(n_modes):
            share = float(gram.eigenvalues[mode] / total) if total > 0 else 0.0
            weights = sensor_importance(gram.eigenvectors, mode, dataset.layout)
            out.append((tidx, mode, share, weights))
    return out
