"""Monte-Carlo-dropout predictive inference.

T stochastic forward passes of the probabilistic estimator give an ensemble
{(mu_k, Sigma_k)}. The aleatoric predictive distribution keeps the mean of
the predicted covariances (input-noise uncertainty as learned by the head);
the epistemic one keeps the sample covariance of the means (spread induced
by the dropout-sampled weights). Either distribution can be pushed through
the decoder by sampling to get per-pixel field statistics, a pixel-averaged
log-likelihood score, and confidence ellipses on the latent coordinate
planes.

Forward passes and decodes are independent given per-call RNG streams, so
callers may fan out in parallel as long as each task derives its own seeded
substream; everything here is pure given the rng argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .dataset import format_float
from .errors import ContractError, DataMismatchError, NumericError, ShapeError
from .gaussian import LatentDistribution, assemble_cholesky, sample_gaussian, tri_size


@dataclass
class PredictiveEnsemble:
    """T head outputs from stochastic forward passes."""

    means: np.ndarray  # (T, l)
    covariances: np.ndarray  # (T, l, l)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.covariances = np.asarray(self.covariances, dtype=np.float64)
        if self.means.shape[0] < 2:
            raise ContractError("predictive ensemble needs T >= 2 passes")
        if self.covariances.shape != (*self.means.shape, self.means.shape[1]):
            raise ShapeError(
                f"ensemble shapes disagree: means {self.means.shape}, "
                f"covariances {self.covariances.shape}"
            )

    @property
    def size(self):
        return self.means.shape[0]


def mc_predict(net, x, T, rng, input_noise=None, latent_dim=3) -> PredictiveEnsemble:
    """Run T stochastic forward passes with fresh dropout masks.

    `input_noise`, when given, is a callable (rng, T) -> (T, d) returning one
    perturbation per pass (measurement-noise replication at inference); the
    base input itself stays fixed. The T passes run as one batched forward
    with per-row masks.
    """
    if T < 2:
        raise ContractError("mc_predict needs T >= 2")
    head = latent_dim + tri_size(latent_dim)
    if net.output_dim != head:
        raise DataMismatchError(
            f"network head has {net.output_dim} outputs; the probabilistic head "
            f"needs {head} (deterministic estimators cannot produce covariances)"
        )
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    xs = np.tile(x, (int(T), 1))
    if input_noise is not None:
        xs = xs + input_noise(rng, int(T))
    raw = net.forward(xs, stochastic=True, rng=rng)
    means = raw[:, :latent_dim]
    covs = np.zeros((int(T), latent_dim, latent_dim))
    for k in range(int(T)):
        L = assemble_cholesky(raw[k, latent_dim:], latent_dim)
        c = L @ L.T
        covs[k] = 0.5 * (c + c.T)
    return PredictiveEnsemble(means, covs)


def aleatoric_distribution(ens: PredictiveEnsemble) -> LatentDistribution:
    """Mean of the means, mean of the predicted covariances."""
    cov = ens.covariances.mean(axis=0)
    return LatentDistribution(ens.means.mean(axis=0), 0.5 * (cov + cov.T),
                              "aleatoric")


def epistemic_distribution(ens: PredictiveEnsemble) -> LatentDistribution:
    """Mean of the means, unbiased sample covariance of the means."""
    if ens.size < 2:
        raise ContractError("epistemic covariance needs T >= 2")
    cov = np.cov(ens.means.T, ddof=1)
    cov = np.atleast_2d(cov)
    return LatentDistribution(ens.means.mean(axis=0), 0.5 * (cov + cov.T),
                              "epistemic")


@dataclass
class FieldStats:
    """Per-pixel Gaussian field statistics plus lift moments from decoded
    latent samples."""

    pixel_mean: np.ndarray  # (ny, nx)
    pixel_var: np.ndarray  # (ny, nx)
    lift_mean: float
    lift_var: float
    n_samples: int


def reconstruct_stats(dist: LatentDistribution, decoder, M, rng) -> FieldStats:
    """Draw M latent samples, decode each, and summarize.

    `decoder` maps an (M, l) latent batch to (fields (M, ny, nx), lifts (M,)).
    Field uncertainty is per-pixel only: variances are taken independently at
    every grid point.
    """
    if M < 2:
        raise ContractError("reconstruct_stats needs M >= 2")
    xi = sample_gaussian(dist, int(M), rng)
    fields, lifts = decoder(xi)
    fields = np.asarray(fields, dtype=np.float64)
    lifts = np.asarray(lifts, dtype=np.float64).reshape(-1)
    if fields.shape[0] != int(M) or lifts.size != int(M):
        raise ShapeError("decoder returned a wrong number of samples")
    return FieldStats(
        pixel_mean=fields.mean(axis=0),
        pixel_var=fields.var(axis=0, ddof=1),
        lift_mean=float(lifts.mean()),
        lift_var=float(lifts.var(ddof=1)),
        n_samples=int(M),
    )


VAR_FLOOR = 1e-12


def avg_loglikelihood(stats: FieldStats, truth_field, var_floor=VAR_FLOOR):
    """Pixel-averaged log N(truth | mean, max(var, floor)).

    Large values mean tight predictions that still cover the truth.
    """
    truth = np.asarray(truth_field, dtype=np.float64)
    if truth.shape != stats.pixel_mean.shape:
        raise ShapeError(
            f"truth grid {truth.shape} does not match stats grid {stats.pixel_mean.shape}"
        )
    v = np.maximum(stats.pixel_var, var_floor)
    ll = -0.5 * np.log(2.0 * np.pi * v) - (truth - stats.pixel_mean) ** 2 / (2.0 * v)
    return float(ll.mean())


@dataclass
class EllipseSpec:
    """Confidence ellipse on one latent coordinate plane."""

    plane: tuple  # 0-based axis pair, e.g. (0, 1) for the xi1-xi2 plane
    center: np.ndarray
    semi_axes: np.ndarray  # descending
    angle: float  # orientation of the major axis, in [0, pi)

    def contains(self, points):
        """Membership test for (n, 2) points (boundary counts as inside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64)) - self.center
        c, s = np.cos(self.angle), np.sin(self.angle)
        u = pts[:, 0] * c + pts[:, 1] * s
        w = -pts[:, 0] * s + pts[:, 1] * c
        return (u / self.semi_axes[0]) ** 2 + (w / self.semi_axes[1]) ** 2 <= 1.0


def confidence_ellipse(dist: LatentDistribution, plane=(0, 1), level=0.95) -> EllipseSpec:
    """Ellipse covering `level` probability of the plane marginal.

    Takes the 2x2 marginal covariance of the chosen axis pair, aligns the
    axes with its eigenvectors, and scales them by sqrt(chi2_2(level) *
    eigenvalue); chi2_2(0.95) = 5.9915.
    """
    i, j = plane
    marg = dist.covariance[np.ix_([i, j], [i, j])]
    w, v = np.linalg.eigh(0.5 * (marg + marg.T))
    if w[0] < -1e-12:
        raise NumericError(f"plane marginal is not PSD (eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    scale = chi2.ppf(level, 2)
    order = [1, 0]  # descending
    semi = np.sqrt(scale * w[order])
    lead = v[:, 1]
    angle = float(np.arctan2(lead[1], lead[0])) % np.pi
    return EllipseSpec((i, j), dist.mean[[i, j]].copy(), semi, angle)


def mahalanobis_sq(dist: LatentDistribution, x):
    """Squared Mahalanobis distance of x under the distribution (PSD-safe via
    a least-squares solve when the covariance is singular)."""
    d = np.asarray(x, dtype=np.float64).reshape(-1) - dist.mean
    try:
        z = np.linalg.solve(dist.covariance, d)
    except np.linalg.LinAlgError:
        z = np.linalg.lstsq(dist.covariance, d, rcond=None)[0]
    return float(d @ z)


def ellipsoid_quantile(level=0.95, dim=3):
    """chi-square threshold for the full-dimensional confidence ellipsoid."""
    return float(chi2.ppf(level, dim))


# --- evaluation report rows ---------------------------------------------------

REPORT_HEADER = ("case_id,time_index,kind,lift_mean,lift_2sigma,"
                 "avg_loglikelihood,max_latent_uncertainty")


def write_report_csv(path, rows):
    """Rows: (case_id, time_index, kind, lift_mean, lift_2sigma, avg_ll,
    max_flag) tuples, one per snapshot and uncertainty kind."""
    with open(path, "w", newline="") as fh:
        fh.write(REPORT_HEADER + "\n")
        for case_id, tidx, kind, lift_mean, lift_2s, avg_ll, flag in rows:
            fh.write(",".join([
                str(int(case_id)), str(int(tidx)), str(kind),
                format_float(lift_mean), format_float(lift_2s),
                format_float(avg_ll), str(int(flag)),
            ]) + "\n")
