"""Heteroscedastic multivariate-Gaussian output head.

The estimator's raw head output carries the predicted latent mean plus the
packed entries of a lower-triangular factor L with Sigma = L L^T. Diagonal
slots hold the log of the squared diagonal entries (so L_ii = exp(raw/2) is
positive by construction); off-diagonal slots are used directly. Packing is
row-major over the lower triangle: (L11, L21, L22, L31, L32, L33) for l=3.

The negative log-likelihood is evaluated through triangular solves, never an
explicit inverse; the dense determinant/inverse formula survives only in the
test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import autodiff as ad
from .errors import NumericError, ShapeError

LOG_2PI = float(np.log(2.0 * np.pi))

# |raw diagonal| beyond this is clamped before exponentiation
RAW_DIAG_LIMIT = 40.0


def tri_size(l):
    return l * (l + 1) // 2


def _diag_slot(i):
    # row-major lower-triangle offset of entry (i, i)
    return i * (i + 3) // 2


def _off_slot(i, j):
    # row-major lower-triangle offset of entry (i, j), j < i
    return i * (i + 1) // 2 + j


def assemble_cholesky(raw_tri, l=3):
    """Build the lower-triangular factor from raw head outputs.

    Diagonal slots are exponentiated as exp(raw/2) (so L_ii^2 = exp(raw));
    off-diagonals are copied. Raw diagonals are clamped to +-40 to prevent
    exp overflow; use `raw_was_clamped` to flag such outputs.
    """
    raw = np.asarray(raw_tri, dtype=np.float64).reshape(-1)
    if raw.size != tri_size(l):
        raise ShapeError(f"raw triangular vector has {raw.size} entries, need {tri_size(l)}")
    L = np.zeros((l, l))
    for i in range(l):
        d = np.clip(raw[_diag_slot(i)], -RAW_DIAG_LIMIT, RAW_DIAG_LIMIT)
        L[i, i] = np.exp(0.5 * d)
        for j in range(i):
            L[i, j] = raw[_off_slot(i, j)]
    return L


def raw_was_clamped(raw_tri, l=3):
    raw = np.asarray(raw_tri, dtype=np.float64).reshape(-1)
    return any(abs(raw[_diag_slot(i)]) > RAW_DIAG_LIMIT for i in range(l))


@dataclass
class GaussianPrediction:
    """One head output: mean, packed factor entries, assembled L."""

    mean: np.ndarray
    raw_tri: np.ndarray
    L: np.ndarray
    clamped: bool = False

    @classmethod
    def from_raw(cls, raw, l=3):
        raw = np.asarray(raw, dtype=np.float64).reshape(-1)
        if raw.size != l + tri_size(l):
            raise ShapeError(
                f"head output has {raw.size} entries, need {l + tri_size(l)} "
                f"({l} means + {tri_size(l)} factor entries)"
            )
        tri = raw[l:]
        return cls(
            mean=raw[:l].copy(),
            raw_tri=tri.copy(),
            L=assemble_cholesky(tri, l),
            clamped=raw_was_clamped(tri, l),
        )

    def covariance(self):
        cov = self.L @ self.L.T
        return 0.5 * (cov + cov.T)


def nll_loss(y, mu, L):
    """Negative log density of N(mu, L L^T) at y, via triangular solves:
    (l/2) log 2pi + sum_i log L_ii + 0.5 ||L^-1 (y - mu)||^2."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    L = np.asarray(L, dtype=np.float64)
    l = y.size
    if mu.size != l or L.shape != (l, l):
        raise ShapeError(f"nll dims disagree: y {y.shape}, mu {mu.shape}, L {L.shape}")
    diag = np.diag(L)
    if np.any(diag < 1e-150):
        raise NumericError("triangular factor is numerically singular")
    z = solve_triangular(L, y - mu, lower=True)
    return float(0.5 * l * LOG_2PI + np.sum(np.log(diag)) + 0.5 * z @ z)


@dataclass
class LatentDistribution:
    """Gaussian over the latent state, tagged by the uncertainty it carries."""

    mean: np.ndarray
    covariance: np.ndarray
    kind: str  # "aleatoric" | "epistemic"

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.covariance, dtype=np.float64)
        l = self.mean.size
        if cov.shape != (l, l):
            raise ShapeError(f"covariance shape {cov.shape} does not match mean dim {l}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise NumericError("covariance is not symmetric within 1e-12")
        if np.linalg.eigvalsh(cov).min() < -1e-12:
            raise NumericError("covariance has eigenvalues below -1e-12")
        self.covariance = cov

    @property
    def dim(self):
        return self.mean.size


def _psd_factor(cov):
    """A factor C with C C^T = cov. Cholesky when positive definite, else an
    eigenvalue factor with tiny negatives (>= -1e-12) clipped to zero, so a
    zero covariance reproduces the mean exactly."""
    cov = np.asarray(cov, dtype=np.float64)
    cov = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-12:
        raise NumericError(f"covariance is not PSD (min eigenvalue {w.min():.3e})")
    return v * np.sqrt(np.clip(w, 0.0, None))


def sample_gaussian(dist: LatentDistribution, n, rng):
    """Draw n vectors mean + C z with z standard normal."""
    C = _psd_factor(dist.covariance)
    z = rng.standard_normal((int(n), dist.dim))
    return dist.mean + z @ C.T


class HeteroscedasticNllLoss:
    """Batched NLL objective over raw head outputs, in the trainer protocol.

    The forward substitution for L^-1 (y - mu) is unrolled over the latent
    dimension as column operations, which keeps the whole loss on the
    autodiff tape and vectorized over the batch.
    """

    def __init__(self, latent_dim=3):
        self.latent_dim = latent_dim

    def head_dim(self):
        return self.latent_dim + tri_size(self.latent_dim)

    def build(self, raw, yb):
        l = self.latent_dim
        raw_cols = raw.shape[1]
        if raw_cols != self.head_dim():
            raise ShapeError(
                f"head output has {raw_cols} columns, need {self.head_dim()} "
                f"for a {l}-dim probabilistic head"
            )
        yb = np.asarray(yb, dtype=np.float64)
        diag = []
        quad = None
        z = []
        logdet = None
        for i in range(l):
            d = ad.clip(ad.col(raw, l + _diag_slot(i)), -RAW_DIAG_LIMIT, RAW_DIAG_LIMIT)
            diag.append(d)
            logdet = d if logdet is None else logdet + d
            r = ad.sub(yb[:, i : i + 1], ad.col(raw, i))
            for j in range(i):
                lij = ad.col(raw, l + _off_slot(i, j))
                r = r - lij * z[j]
            zi = r / ad.exp(0.5 * d)
            z.append(zi)
            quad = zi * zi if quad is None else quad + zi * zi
        rows = 0.5 * l * LOG_2PI + 0.5 * logdet + 0.5 * quad
        return ad.mean_all(rows)

    def evaluate(self, raw, y):
        tape = ad.Tape()
        return float(self.build(tape.var(raw), y).value)
