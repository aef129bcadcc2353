"""Lift-augmented autoencoder: compresses the vorticity window to a 3-dim
latent state with one decoder for the field and one for the lift
coefficient, trained jointly with loss  field MSE + beta * squared lift
error  (beta = 0.05).

Dense tanh stacks stand in for the convolutional design used on full DNS
grids; the coarse surrogate window keeps them adequate. Hidden layers use
tanh, output layers are linear. All training happens in normalized units
(train-split constants); `encode`/`decode` expose physical units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .dataset import Dataset, format_float
from .errors import DataMismatchError, ShapeError
from .network import LayerSpec, Network, NetworkSpec, SplitData, TrainConfig, train

LATENT_DIM = 3
DEFAULT_BETA = 0.05
ENCODER_HIDDEN = (256, 64)
LIFT_HIDDEN = (64,)


def ae_loss(omega, omega_hat, lift, lift_hat, beta=DEFAULT_BETA):
    """Reconstruction loss for one snapshot: per-pixel mean squared field
    error plus beta times the squared lift error."""
    omega = np.asarray(omega, dtype=np.float64)
    omega_hat = np.asarray(omega_hat, dtype=np.float64)
    if omega.shape != omega_hat.shape:
        raise ShapeError(f"field shapes disagree: {omega.shape} vs {omega_hat.shape}")
    field_term = float(np.mean((omega - omega_hat) ** 2))
    lift_term = float(lift - lift_hat) ** 2
    return field_term + beta * lift_term


class AeLoss:
    """Batched autoencoder objective in the trainer protocol; predictions and
    targets are (field rows, lift column) pairs."""

    def __init__(self, beta=DEFAULT_BETA):
        self.beta = beta

    def build(self, pred, yb):
        field_hat, lift_hat = pred
        field, lift = yb
        df = ad.sub(field_hat, field)
        dl = ad.sub(lift_hat, lift)
        return ad.mean_all(ad.mul(df, df)) + self.beta * ad.mean_all(ad.mul(dl, dl))

    def evaluate(self, pred, y):
        field_hat, lift_hat = pred
        field, lift = y
        return float(np.mean((field_hat - field) ** 2)
                     + self.beta * np.mean((lift_hat - lift) ** 2))


@dataclass
class LatentTrajectory:
    """Encoded history of one case, the estimator's regression target."""

    case_id: int
    times: np.ndarray
    xi: np.ndarray  # (n, 3)

    def __len__(self):
        return self.times.size


class AutoencoderModel:
    """Encoder plus field/lift decoders with the normalization constants the
    networks were trained under."""

    def __init__(self, encoder: Network, field_decoder: Network,
                 lift_decoder: Network, grid_shape, norms, beta=DEFAULT_BETA):
        self.encoder = encoder
        self.field_decoder = field_decoder
        self.lift_decoder = lift_decoder
        self.grid_shape = tuple(grid_shape)  # (ny, nx)
        self.norms = dict(norms)
        self.beta = beta

    @property
    def n_pixels(self):
        return self.grid_shape[0] * self.grid_shape[1]

    # --- physical-unit interface ---------------------------------------

    def _normalize_fields(self, omega):
        omega = np.asarray(omega, dtype=np.float64)
        flat = omega.reshape(-1, self.n_pixels) if omega.ndim > 1 else omega.reshape(1, -1)
        return (flat - self.norms["omega_mean"]) / self.norms["omega_std"]

    def encode(self, omega, lift=None):
        """Latent state of one snapshot or a batch.

        The latent chart is a function of the field alone; the lift argument
        is accepted for call-shape symmetry with `decode` and may be omitted.
        """
        omega = np.asarray(omega, dtype=np.float64)
        single = omega.ndim == 1 or (omega.ndim == 2 and omega.shape == self.grid_shape)
        xi = self.encoder.forward(self._normalize_fields(omega))
        return xi[0] if single else xi

    def decode(self, xi):
        """Reconstructed (vorticity window, lift) in physical units."""
        xi = np.asarray(xi, dtype=np.float64)
        single = xi.ndim == 1
        z = xi.reshape(1, -1) if single else xi
        if z.shape[1] != LATENT_DIM:
            raise ShapeError(f"latent dim {z.shape[1]} != {LATENT_DIM}")
        field = self.field_decoder.forward(z)
        field = field * self.norms["omega_std"] + self.norms["omega_mean"]
        field = field.reshape(-1, *self.grid_shape)
        lift = self.lift_decoder.forward(z)[:, 0]
        lift = lift * self.norms["lift_std"] + self.norms["lift_mean"]
        if single:
            return field[0], float(lift[0])
        return field, lift

    def decoder_fn(self):
        """Batched latent -> (fields, lifts) callable for sampling-based
        reconstruction statistics."""
        return lambda xi: self.decode(np.atleast_2d(xi))

    # --- trainer protocol (normalized units) -----------------------------

    def parameters(self):
        return (self.encoder.parameters() + self.field_decoder.parameters()
                + self.lift_decoder.parameters())

    def set_parameters(self, params):
        n_e = len(self.encoder.parameters())
        n_f = len(self.field_decoder.parameters())
        self.encoder.set_parameters(params[:n_e])
        self.field_decoder.set_parameters(params[n_e : n_e + n_f])
        self.lift_decoder.set_parameters(params[n_e + n_f :])

    def param_leaves(self, tape):
        return [tape.var(p) for p in self.parameters()]

    def training_forward(self, tape, xb, rng, param_vars):
        n_e = len(self.encoder.parameters())
        n_f = len(self.field_decoder.parameters())
        xi = self.encoder.apply(tape.var(xb), param_vars=param_vars[:n_e])
        field = self.field_decoder.apply(xi, param_vars=param_vars[n_e : n_e + n_f])
        lift = self.lift_decoder.apply(xi, param_vars=param_vars[n_e + n_f :])
        return field, lift

    def predict(self, x):
        xi = self.encoder.forward(x)
        return self.field_decoder.forward(xi), self.lift_decoder.forward(xi)


def _dense_spec(input_dim, hidden, output_dim):
    layers = [LayerSpec(h, "tanh") for h in hidden]
    layers.append(LayerSpec(output_dim, "identity"))
    return NetworkSpec(input_dim, layers)


def build_autoencoder(n_pixels, grid_shape, norms, rng, hidden=ENCODER_HIDDEN,
                      lift_hidden=LIFT_HIDDEN, beta=DEFAULT_BETA):
    encoder = Network(_dense_spec(n_pixels, hidden, LATENT_DIM), rng=rng)
    field_decoder = Network(_dense_spec(LATENT_DIM, tuple(reversed(hidden)), n_pixels),
                            rng=rng)
    lift_decoder = Network(_dense_spec(LATENT_DIM, lift_hidden, 1), rng=rng)
    return AutoencoderModel(encoder, field_decoder, lift_decoder, grid_shape,
                            norms, beta)


def train_autoencoder(dataset: Dataset, config: TrainConfig, beta=DEFAULT_BETA,
                      hidden=ENCODER_HIDDEN):
    """Train on the dataset's normalized fields/lift and encode every case.

    Returns (model, latent trajectories in case order, history).
    """
    fields = dataset.fields_flat()
    mu, sd = dataset.norms["omega_mean"], dataset.norms["omega_std"]
    lm, ls = dataset.norms["lift_mean"], dataset.norms["lift_std"]
    x = (fields - mu) / sd
    lift = ((dataset.lift - lm) / ls)[:, None]
    tr, va = dataset.train_indices(), dataset.val_indices()
    data = SplitData(x[tr], (x[tr], lift[tr]), x[va], (x[va], lift[va]))

    model = build_autoencoder(dataset.grid.n_pixels,
                              (dataset.grid.ny, dataset.grid.nx), dataset.norms,
                              np.random.default_rng([config.rng_seed, 0xAE]),
                              hidden=hidden, beta=beta)
    history = train(model, data, AeLoss(beta), config)

    trajectories = []
    for case in dataset.cases:
        idx = dataset.case_indices(case.case_id)
        xi = model.encoder.forward(x[idx])
        trajectories.append(LatentTrajectory(case.case_id, dataset.times[idx], xi))
    return model, trajectories, history


def encoded_targets(trajectories):
    """Latent targets stacked in dataset row order (case-major, time order)."""
    return np.concatenate([t.xi for t in trajectories])


def pod_baseline_mse(dataset: Dataset, rank=3):
    """Validation MSE (normalized units) of the best rank-r linear fit: a
    truncated SVD of the mean-centered training fields. The independent
    baseline the nonlinear autoencoder must beat."""
    fields = dataset.fields_flat()
    x = (fields - dataset.norms["omega_mean"]) / dataset.norms["omega_std"]
    tr, va = dataset.train_indices(), dataset.val_indices()
    center = x[tr].mean(axis=0)
    _, _, vt = np.linalg.svd(x[tr] - center, full_matrices=False)
    basis = vt[:rank]
    recon = center + (x[va] - center) @ basis.T @ basis
    return float(np.mean((x[va] - recon) ** 2))


def ae_validation_field_mse(model: AutoencoderModel, dataset: Dataset):
    """Validation field MSE of the trained autoencoder in the same
    normalized units as the POD baseline."""
    fields = dataset.fields_flat()
    x = (fields - dataset.norms["omega_mean"]) / dataset.norms["omega_std"]
    va = dataset.val_indices()
    xi = model.encoder.forward(x[va])
    recon = model.field_decoder.forward(xi)
    return float(np.mean((x[va] - recon) ** 2))


# --- latent trajectory CSV (consumed by the estimator trainer) ---------------


def write_latents_csv(path, trajectories):
    with open(path, "w", newline="") as fh:
        fh.write("case_id,t,xi1,xi2,xi3\n")
        for traj in trajectories:
            for t, xi in zip(traj.times, traj.xi):
                fh.write(",".join([str(int(traj.case_id)), format_float(t),
                                   format_float(xi[0]), format_float(xi[1]),
                                   format_float(xi[2])]) + "\n")


def read_latents_csv(path):
    """Rows back as (case_ids, times, xi) in file order."""
    case_ids, times, xi = [], [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "case_id,t,xi1,xi2,xi3":
            raise DataMismatchError(f"{path}: unexpected latent CSV header {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            case_ids.append(int(parts[0]))
            times.append(float(parts[1]))
            xi.append([float(v) for v in parts[2:5]])
    return (np.asarray(case_ids, dtype=np.int64), np.asarray(times),
            np.asarray(xi, dtype=np.float64))
