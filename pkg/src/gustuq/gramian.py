"""Measurement-space Gramian analysis.

The Gramian C_x = E[J(x)^T J(x)] of the deterministic estimator's input
Jacobian, Monte-Carlo averaged over noisy inputs, ranks directions in sensor
space by how strongly they move the latent prediction. Its leading
eigenvectors drive two things downstream: structured measurement noise for
inference-time uncertainty replication, and per-sensor importance bars.

Jacobians across the Monte Carlo samples are independent and could fan out
in parallel; the accumulation is an indexed einsum reduction so results stay
seed-reproducible regardless of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import batched_jacobian
from .dataset import format_float
from .errors import ContractError, NumericError, ShapeError

DEFAULT_ENERGY_THRESHOLD = 0.99
DEFAULT_NOISE_VARIANCE = 2.5e-5  # 0.15% accuracy on an O(3) max pressure reading


@dataclass
class GramianResult:
    """PSD Gramian with its eigendecomposition, eigenvalues descending."""

    matrix: np.ndarray  # (d, d)
    eigenvalues: np.ndarray  # (d,) descending
    eigenvectors: np.ndarray  # (d, d), orthonormal columns

    def __post_init__(self):
        d = self.matrix.shape[0]
        scale = max(1.0, float(np.max(np.abs(self.matrix))))
        if np.min(self.eigenvalues) < -1e-10 * scale:
            raise NumericError("Gramian has significantly negative eigenvalues")
        if np.any(np.diff(self.eigenvalues) > 1e-12 * scale):
            raise NumericError("Gramian eigenvalues are not sorted descending")
        gram_err = np.max(np.abs(self.eigenvectors.T @ self.eigenvectors - np.eye(d)))
        if gram_err > 1e-10:
            raise NumericError(f"eigenvector basis not orthonormal ({gram_err:.2e})")

    @property
    def dim(self):
        return self.matrix.shape[0]

    def energy_share(self, k):
        """Fraction of total eigenvalue mass carried by the first k modes."""
        total = self.eigenvalues.sum()
        if total <= 0.0:
            return 0.0
        return float(self.eigenvalues[:k].sum() / total)


def measurement_gramian(net, base_input, noise_sampler, n_mc, rng) -> GramianResult:
    """Monte Carlo Gramian (1/n) sum_i J(x_i)^T J(x_i) around a base input.

    `net` is evaluated deterministically (no dropout): either a Network or
    any callable mapping a batch leaf Var to an output Var row-wise.
    `noise_sampler(rng, n) -> (n, d)` perturbs the samples; pass None for the
    clean-input Gramian.
    """
    if n_mc < 1:
        raise ContractError("need n_mc >= 1 Monte Carlo samples")
    fn = net.apply if hasattr(net, "apply") else net
    x = np.asarray(base_input, dtype=np.float64).reshape(-1)
    xs = np.tile(x, (int(n_mc), 1))
    if noise_sampler is not None:
        xs = xs + noise_sampler(rng, int(n_mc))
    jac = batched_jacobian(fn, xs)  # (n, l, d)
    c = np.einsum("nli,nlj->ij", jac, jac) / int(n_mc)
    c = 0.5 * (c + c.T)
    w, v = np.linalg.eigh(c)
    order = np.argsort(w)[::-1]
    return GramianResult(c, w[order], v[:, order])


def select_rank(eigenvalues, gamma=DEFAULT_ENERGY_THRESHOLD):
    """Smallest r whose cumulative normalized eigenvalue energy reaches gamma;
    0 only when the spectrum carries no energy at all."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.size == 0:
        raise ContractError("empty eigenvalue spectrum")
    if not 0.0 <= gamma <= 1.0:
        raise ContractError(f"energy threshold must be in [0, 1], got {gamma}")
    total = lam.sum()
    if total <= 0.0:
        return 0
    cumulative = np.cumsum(lam) / total
    return int(np.searchsorted(cumulative, gamma - 1e-12) + 1)


@dataclass
class NoiseModel:
    """Structured input noise along retained Gramian modes: eta = U_r zeta
    with zeta ~ N(0, sigma^2 I_r); masked slots (exactly known coordinates)
    are forced to zero."""

    modes: np.ndarray  # (d, r), orthonormal columns
    coeff_variance: float
    zero_mask: np.ndarray  # (d,) bool, True where entries carry no noise

    def __post_init__(self):
        if self.coeff_variance < 0.0:
            raise ContractError("noise variance must be >= 0")
        r = self.modes.shape[1]
        err = np.max(np.abs(self.modes.T @ self.modes - np.eye(r)), initial=0.0)
        if err > 1e-8:
            raise NumericError(f"retained modes are not orthonormal ({err:.2e})")

    @property
    def rank(self):
        return self.modes.shape[1]


def structured_noise(model: NoiseModel, rng, n=None):
    """One (d,) draw, or an (n, d) batch, of structured input noise."""
    count = 1 if n is None else int(n)
    zeta = np.sqrt(model.coeff_variance) * rng.standard_normal((count, model.rank))
    eta = zeta @ model.modes.T
    eta[:, model.zero_mask] = 0.0
    return eta[0] if n is None else eta


def noise_model_from_gramian(gram: GramianResult, gamma, coeff_variance,
                             zero_slots) -> NoiseModel:
    """Retain the leading modes per the energy threshold and zero out the
    exactly-measured slots (sensor coordinates)."""
    r = max(select_rank(gram.eigenvalues, gamma), 1)
    mask = np.zeros(gram.dim, dtype=bool)
    mask[np.asarray(zero_slots, dtype=int)] = True
    return NoiseModel(gram.eigenvectors[:, :r].copy(), coeff_variance, mask)


def iid_pressure_noise(layout, variance=DEFAULT_NOISE_VARIANCE):
    """White-noise sampler on the pressure slots only (coordinates are taken
    as exactly known), for the Gramian's Monte Carlo expectation."""
    slots = layout.pressure_slots

    def sampler(rng, n):
        eta = np.zeros((int(n), layout.stacked_dim))
        eta[:, slots] = np.sqrt(variance) * rng.standard_normal((int(n), slots.size))
        return eta

    return sampler


def sensor_importance(eigenvectors, mode_index, layout):
    """Signed per-sensor weights of one eigenmode: its pressure-slot
    components, sign-fixed so the largest-magnitude bar points up."""
    u = np.asarray(eigenvectors)
    if not 0 <= mode_index < u.shape[1]:
        raise ShapeError(f"mode index {mode_index} out of range for {u.shape[1]} modes")
    w = u[layout.pressure_slots, mode_index].copy()
    if w[np.argmax(np.abs(w))] < 0.0:
        w = -w
    return w


def write_sensitivity_csv(path, rows, n_sensors=11):
    """Rows: (time_index, mode_index, eigenvalue_share, weights[11])."""
    header = ["time_index", "mode_index", "eigenvalue_share"] + [
        f"w{i + 1}" for i in range(n_sensors)]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for tidx, mode, share, weights in rows:
            fh.write(",".join([str(int(tidx)), str(int(mode)), format_float(share)]
                              + [format_float(w) for w in weights]) + "\n")
