"""Dense feed-forward networks with inverted dropout, Adam, and early stopping.

Realizes the sensor-to-latent estimator (trunk 33-64-128-256-512-256-128-64
with a dropout layer after every hidden dense layer, then a linear head) and
the generic machinery the autoencoder reuses: a model/loss protocol consumed
by `train`, checkpoint serialization, and the Adam optimizer.

Training is single-threaded and deterministic per seed. A trained network is
immutable in practice (nothing here mutates parameters outside `train`) and
safe for concurrent stochastic evaluation when each caller brings its own
RNG stream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DataMismatchError, NumericError, ShapeError

ACTIVATIONS = ("identity", "relu", "tanh")

# hidden widths of the pressure-to-latent estimator trunk
ESTIMATOR_HIDDEN = (64, 128, 256, 512, 256, 128, 64)


def glorot_uniform(fan_out, fan_in, rng):
    """Uniform init in +-sqrt(6/(fan_in+fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


@dataclass
class DropoutLayer:
    """Inverted dropout: kept units are rescaled by 1/keep_probability at
    sampling time so the deterministic pass needs no weight rescaling."""

    keep_probability: float

    def __post_init__(self):
        if not 0.0 < self.keep_probability <= 1.0:
            raise ConfigError(
                f"keep probability must be in (0, 1], got {self.keep_probability}"
            )

    def sample_mask(self, rng, shape):
        if self.keep_probability >= 1.0:
            return np.ones(shape)
        keep = self.keep_probability
        return (rng.random(shape) < keep) / keep


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise NumericError("dense layer initialized with non-finite parameters")


@dataclass
class LayerSpec:
    units: int
    activation: str = "identity"
    dropout_rate: float = 0.0  # rate (1 - p) applied after the activation


@dataclass
class NetworkSpec:
    input_dim: int
    layers: list[LayerSpec]

    def __post_init__(self):
        if self.input_dim <= 0 or not self.layers:
            raise ConfigError("network needs a positive input dim and >= 1 layer")
        for spec in self.layers:
            if spec.activation not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {spec.activation!r}")
            if not 0.0 <= spec.dropout_rate < 1.0:
                raise ConfigError(f"dropout rate must be in [0, 1), got {spec.dropout_rate}")

    @property
    def output_dim(self):
        return self.layers[-1].units


def estimator_spec(input_dim=33, latent_dim=3, probabilistic=True, dropout_rate=0.05):
    """Pressure-to-latent estimator: ReLU trunk with dropout after every
    hidden dense layer, then one linear head.

    The probabilistic head emits latent_dim means plus the
    latent_dim*(latent_dim+1)/2 raw entries of a lower-triangular covariance
    factor; the deterministic variant emits the latent vector directly.
    """
    layers = [LayerSpec(w, "relu", dropout_rate) for w in ESTIMATOR_HIDDEN]
    out = latent_dim + latent_dim * (latent_dim + 1) // 2 if probabilistic else latent_dim
    layers.append(LayerSpec(out, "identity", 0.0))
    return NetworkSpec(input_dim, layers)


_ACT_FORWARD = {
    "identity": lambda x: x,
    "relu": lambda x: np.maximum(x, 0.0),
    "tanh": np.tanh,
}
_ACT_VAR = {"identity": lambda v: v, "relu": ad.relu, "tanh": ad.tanh}


class Network:
    """A stack of dense layers with per-layer inverted dropout."""

    def __init__(self, spec: NetworkSpec, rng=None, layers=None):
        self.spec = spec
        if layers is not None:
            self.layers = layers
        else:
            if rng is None:
                raise ConfigError("need an rng to initialize parameters")
            self.layers = []
            fan_in = spec.input_dim
            for ls in spec.layers:
                w = glorot_uniform(ls.units, fan_in, rng)
                self.layers.append(DenseLayer(w, np.zeros(ls.units), ls.activation))
                fan_in = ls.units
        self._dropouts = [
            DropoutLayer(1.0 - ls.dropout_rate) if ls.dropout_rate > 0.0 else None
            for ls in spec.layers
        ]

    @property
    def input_dim(self):
        return self.spec.input_dim

    @property
    def output_dim(self):
        return self.spec.output_dim

    # --- plain inference path -------------------------------------------

    def forward(self, x, stochastic=False, rng=None):
        """Evaluate the network; stochastic mode samples fresh dropout masks
        per row (each batch row sees its own mask draw)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x.reshape(1, -1) if single else x
        if h.shape[1] != self.input_dim:
            raise ShapeError(
                f"input dim {h.shape[1]} does not match network input {self.input_dim}"
            )
        if stochastic and rng is None:
            raise ConfigError("stochastic forward requires an rng")
        for i, (layer, drop) in enumerate(zip(self.layers, self._dropouts)):
            h = h @ layer.weights.T + layer.bias
            h = _ACT_FORWARD[layer.activation](h)
            if not np.isfinite(h).all():
                raise NumericError(f"non-finite activation in dense layer {i}")
            if stochastic and drop is not None:
                h = h * drop.sample_mask(rng, h.shape)
        return h[0] if single else h

    # --- tape path (shared by training and input Jacobians) --------------

    def apply(self, x_var, stochastic=False, rng=None, param_vars=None):
        """Build the forward computation on the tape `x_var` lives on.

        `param_vars` is the leaf list from `param_leaves` when parameters
        need adjoints (training); left as None, parameters are constants and
        only the input receives a gradient (Jacobian/Gramian use).
        """
        h = x_var
        for i, (layer, drop) in enumerate(zip(self.layers, self._dropouts)):
            w = param_vars[2 * i] if param_vars is not None else layer.weights
            b = param_vars[2 * i + 1] if param_vars is not None else layer.bias
            h = ad.add(ad.matmul(h, ad.transpose(w)), b)
            h = _ACT_VAR[layer.activation](h)
            if stochastic and drop is not None:
                h = ad.mul(h, drop.sample_mask(rng, h.shape))
        return h

    # --- model protocol used by `train` -----------------------------------

    def parameters(self):
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def set_parameters(self, params):
        for current, new in zip(self.parameters(), params):
            current[...] = new

    def param_leaves(self, tape):
        return [tape.var(p) for p in self.parameters()]

    def training_forward(self, tape, xb, rng, param_vars):
        return self.apply(tape.var(xb), stochastic=True, rng=rng,
                          param_vars=param_vars)

    def predict(self, x):
        return self.forward(x, stochastic=False)


# --- losses ---------------------------------------------------------------


def mse_loss(pred, truth):
    """Mean of squared differences between two equal-length vectors."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"mse shape mismatch: {pred.shape} vs {truth.shape}")
    return float(np.mean((pred - truth) ** 2))


class MseLoss:
    """Mean-squared-error objective in the trainer's loss protocol."""

    def build(self, pred, yb):
        d = ad.sub(pred, yb)
        return ad.mean_all(ad.mul(d, d))

    def evaluate(self, pred, y):
        return float(np.mean((np.asarray(pred) - np.asarray(y)) ** 2))


# --- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(params, grads, state: AdamState, learning_rate, weight_decay=0.0):
    """One in-place Adam update with bias correction.

    Weight decay enters as the additive L2 gradient term 2*lambda*w. Raises
    on non-finite gradients, naming the offending parameter index.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.isfinite(g).all():
            raise NumericError(
                f"non-finite gradient for parameter {i} at adam step {state.t}"
            )
        if weight_decay:
            g = g + 2.0 * weight_decay * p
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p -= learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


# --- training loop ----------------------------------------------------------


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 256
    max_epochs: int = 1000
    patience: int = 50
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.max_epochs, self.patience) <= 0:
            raise ConfigError("learning rate, batch size, epochs, patience must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be >= 0")
        if self.patience > self.max_epochs:
            raise ConfigError(
                f"patience {self.patience} exceeds max_epochs {self.max_epochs}"
            )


def _take(y, idx):
    if isinstance(y, tuple):
        return tuple(a[idx] for a in y)
    return y[idx]


def _rows(y):
    return y[0].shape[0] if isinstance(y, tuple) else y.shape[0]


@dataclass
class SplitData:
    """Pre-split 80/20 train/validation arrays; y may be a tuple of arrays."""

    x_train: np.ndarray
    y_train: object
    x_val: np.ndarray
    y_val: object

    def __post_init__(self):
        if self.x_train.shape[0] == 0 or self.x_val.shape[0] == 0:
            raise ConfigError("empty train or validation split")
        if self.x_train.shape[0] != _rows(self.y_train):
            raise ShapeError("train inputs and targets disagree in length")
        if self.x_val.shape[0] != _rows(self.y_val):
            raise ShapeError("validation inputs and targets disagree in length")


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = np.inf
    diverged: bool = False

    @property
    def epochs_run(self):
        return len(self.val_loss)


def train(model, data: SplitData, loss, config: TrainConfig) -> History:
    """Minibatch Adam with early stopping on the validation loss.

    Stops once the validation loss has not improved for `patience` epochs
    and restores the parameters of the best validation epoch. Validation is
    evaluated deterministically (dropout off); training batches sample fresh
    dropout masks. A NaN validation loss aborts gracefully: the best finite
    parameter set is restored and the history is flagged as diverged.
    """
    rng = np.random.default_rng(config.rng_seed)
    n = data.x_train.shape[0]
    params = model.parameters()
    state = AdamState.for_params(params)
    history = History()
    best_params = [p.copy() for p in params]
    stale = 0

    for epoch in range(config.max_epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            tape = ad.Tape()
            leaves = model.param_leaves(tape)
            pred = model.training_forward(tape, data.x_train[idx], rng, leaves)
            loss_var = loss.build(pred, _take(data.y_train, idx))
            value = float(loss_var.value)
            if not np.isfinite(value):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            tape.backward(loss_var)
            grads = [
                lv.grad if lv.grad is not None else np.zeros_like(lv.value)
                for lv in leaves
            ]
            adam_step(params, grads, state, config.learning_rate, config.weight_decay)
            batch_losses.append(value)

        history.train_loss.append(float(np.mean(batch_losses)))
        val = loss.evaluate(model.predict(data.x_val), data.y_val)
        history.val_loss.append(val)

        if not np.isfinite(val):
            history.diverged = True
            break
        if val < history.best_val:
            history.best_val = val
            history.best_epoch = epoch
            best_params = [p.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    model.set_parameters(best_params)
    return history


# --- checkpoint file ("GUQM") ------------------------------------------------

_MAGIC = b"GUQM"
_FORMAT_VERSION = 1
_ACT_TAG = {"identity": 0, "relu": 1, "tanh": 2}
_TAG_ACT = {v: k for k, v in _ACT_TAG.items()}


def save_network(path, net: Network):
    """Write a checkpoint: magic, version, layer dims, activation tags,
    dropout rates, then parameters as little-endian float64 in layer order."""
    spec = net.spec
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, len(spec.layers)))
        fh.write(struct.pack("<I", spec.input_dim))
        for ls in spec.layers:
            fh.write(struct.pack("<IBd", ls.units, _ACT_TAG[ls.activation], ls.dropout_rate))
        for layer in net.layers:
            fh.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise DataMismatchError(f"{path}: not a network checkpoint (bad magic)")
        version, n_layers = struct.unpack("<II", fh.read(8))
        if version != _FORMAT_VERSION:
            raise DataMismatchError(f"{path}: unsupported checkpoint version {version}")
        (input_dim,) = struct.unpack("<I", fh.read(4))
        layer_specs = []
        for _ in range(n_layers):
            units, tag, rate = struct.unpack("<IBd", fh.read(13))
            layer_specs.append(LayerSpec(units, _TAG_ACT[tag], rate))
        spec = NetworkSpec(input_dim, layer_specs)
        layers = []
        fan_in = input_dim
        for ls in layer_specs:
            w = np.frombuffer(fh.read(8 * ls.units * fan_in), dtype="<f8")
            w = w.reshape(ls.units, fan_in).astype(np.float64)
            b = np.frombuffer(fh.read(8 * ls.units), dtype="<f8").astype(np.float64)
            layers.append(DenseLayer(w, b, ls.activation))
            fan_in = ls.units
        return Network(spec, layers=layers)
