"""Dataset assembly: case sampling, trajectory stacking, the 80/20 split,
noise augmentation, and the binary/CSV file formats.

The binary container ("GUQD") keeps counts and case metadata in the header
and every per-snapshot record as little-endian float64 in a fixed field
order: t, stacked sensor vector, vorticity window (row-major), lift, true
latent, validation flag.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DataMismatchError
from .gust import (
    DEFAULT_GRID,
    DEFAULT_LAYOUT,
    ALPHA_SET,
    FlowCase,
    GridSpec,
    SensorLayout,
    Snapshot,
    surrogate_trajectory,
)

TRAIN_FRACTION = 0.8

# preset name -> (gust cases per angle of attack, snapshots per case)
PRESETS = {
    "desk": (4, 150),
    "paper-scale": (20, 745),
}


def preset_plan(preset):
    """Case/snapshot counts implied by a preset, without generating data."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    per_alpha, n_snapshots = PRESETS[preset]
    n_cases = len(ALPHA_SET) * (1 + per_alpha)
    return {
        "n_cases": n_cases,
        "n_base_cases": len(ALPHA_SET),
        "n_gust_cases": len(ALPHA_SET) * per_alpha,
        "snapshots_per_case": n_snapshots,
        "total_snapshots": n_cases * n_snapshots,
    }


def sample_cases(preset, seed):
    """One undisturbed case per angle of attack plus seeded random gust
    cases: G in [-1, 1], 2R/c in [0.5, 1], y_o/c in [-0.5, 0.5]."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    per_alpha, _ = PRESETS[preset]
    rng = np.random.default_rng([int(seed), 0xD47A])
    cases = []
    cid = 0
    for alpha in ALPHA_SET:
        cases.append(FlowCase(cid, alpha))
        cid += 1
    for alpha in ALPHA_SET:
        for _ in range(per_alpha):
            g = rng.uniform(-1.0, 1.0)
            two_r = rng.uniform(0.5, 1.0)
            y0 = rng.uniform(-0.5, 0.5)
            cases.append(FlowCase(cid, alpha, gust_strength=g,
                                  gust_radius=0.5 * two_r, gust_y0=y0))
            cid += 1
    return cases


@dataclass
class Dataset:
    """Snapshots stacked across cases (case-major, time-ordered) plus the
    train/validation split and train-split normalization constants."""

    cases: list
    case_ids: np.ndarray  # (N,)
    times: np.ndarray  # (N,)
    p_stacked: np.ndarray  # (N, 3 * n_sensors)
    omega: np.ndarray  # (N, ny, nx)
    lift: np.ndarray  # (N,)
    xi_true: np.ndarray  # (N, 3)
    is_validation: np.ndarray  # (N,) bool
    grid: GridSpec
    layout: SensorLayout
    norms: dict
    split_seed: int

    def __len__(self):
        return self.times.size

    @property
    def n_cases(self):
        return len(self.cases)

    def train_indices(self):
        return np.flatnonzero(~self.is_validation)

    def val_indices(self):
        return np.flatnonzero(self.is_validation)

    def case_indices(self, case_id):
        return np.flatnonzero(self.case_ids == case_id)

    def case(self, case_id) -> FlowCase:
        for c in self.cases:
            if c.case_id == case_id:
                return c
        raise KeyError(f"no case {case_id} in dataset")

    def snapshot(self, i) -> Snapshot:
        return Snapshot(float(self.times[i]), self.p_stacked[i], self.omega[i],
                        float(self.lift[i]), self.xi_true[i])

    def fields_flat(self):
        return self.omega.reshape(len(self), -1)


def _normalization(pressure, omega, lift):
    return {
        "pressure_mean": float(pressure.mean()),
        "pressure_std": float(max(pressure.std(), 1e-12)),
        "omega_mean": float(omega.mean()),
        "omega_std": float(max(omega.std(), 1e-12)),
        "lift_mean": float(lift.mean()),
        "lift_std": float(max(lift.std(), 1e-12)),
    }


def build_dataset(cases, split_seed, n_snapshots=150, grid=DEFAULT_GRID,
                  layout=DEFAULT_LAYOUT) -> Dataset:
    """Integrate every case, stack snapshots, and split 80/20.

    The validation set is the last 20% of a seeded shuffle; normalization
    constants are computed on the training rows only.
    """
    if not cases:
        raise ContractError("no cases to build a dataset from")
    trajs = [surrogate_trajectory(c, n_snapshots, grid=grid, layout=layout)
             for c in cases]
    case_ids = np.concatenate([np.full(len(t), t.case.case_id) for t in trajs])
    times = np.concatenate([t.times for t in trajs])
    p_stacked = np.concatenate([t.p_stacked for t in trajs])
    omega = np.concatenate([t.omega for t in trajs])
    lift = np.concatenate([t.lift for t in trajs])
    xi = np.concatenate([t.xi for t in trajs])

    n = times.size
    order = np.random.default_rng([int(split_seed), 0x5917]).permutation(n)
    n_train = int(TRAIN_FRACTION * n)
    is_val = np.zeros(n, dtype=bool)
    is_val[order[n_train:]] = True

    pressure = p_stacked[:, layout.pressure_slots]
    train = ~is_val
    norms = _normalization(pressure[train], omega[train], lift[train])
    return Dataset(list(cases), case_ids.astype(np.int64), times, p_stacked,
                   omega, lift, xi, is_val, grid, layout, norms, int(split_seed))


def augment_noise(dataset: Dataset, sigma, rng, copies=1) -> Dataset:
    """Append noisy copies of every snapshot: i.i.d. N(0, sigma^2) on the
    pressure entries only, coordinates untouched, originals retained."""
    if sigma < 0:
        raise ContractError(f"noise level must be >= 0, got {sigma}")
    blocks = [dataset.p_stacked]
    pslots = dataset.layout.pressure_slots
    for _ in range(copies):
        noisy = dataset.p_stacked.copy()
        noisy[:, pslots] += sigma * rng.standard_normal((len(dataset), pslots.size))
        blocks.append(noisy)
    reps = copies + 1

    def tile(a):
        return np.concatenate([a] * reps)

    return Dataset(dataset.cases, tile(dataset.case_ids), tile(dataset.times),
                   np.concatenate(blocks), tile(dataset.omega), tile(dataset.lift),
                   tile(dataset.xi_true), tile(dataset.is_validation),
                   dataset.grid, dataset.layout, dict(dataset.norms),
                   dataset.split_seed)


# --- binary container ("GUQD") -------------------------------------------------

_MAGIC = b"GUQD"
_FORMAT_VERSION = 1
_NORM_KEYS = ("pressure_mean", "pressure_std", "omega_mean", "omega_std",
              "lift_mean", "lift_std")


def save_dataset(path, ds: Dataset):
    grid, layout = ds.grid, ds.layout
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIIII", _FORMAT_VERSION, ds.n_cases, len(ds),
                             layout.n_sensors, grid.nx, grid.ny))
        fh.write(struct.pack("<dddd", grid.x_min, grid.x_max, grid.y_min, grid.y_max))
        fh.write(struct.pack("<Q", ds.split_seed & 0xFFFFFFFFFFFFFFFF))
        fh.write(struct.pack("<6d", *(ds.norms[k] for k in _NORM_KEYS)))
        for c in ds.cases:
            fh.write(struct.pack("<IdddddBI", c.case_id, c.alpha_deg,
                                 c.gust_strength, c.gust_radius, c.gust_y0,
                                 c.gust_x0, int(c.disturbed),
                                 int(ds.case_indices(c.case_id).size)))
        records = np.concatenate([
            ds.times[:, None],
            ds.p_stacked,
            ds.fields_flat(),
            ds.lift[:, None],
            ds.xi_true,
            ds.is_validation[:, None].astype(np.float64),
        ], axis=1)
        fh.write(np.ascontiguousarray(records, dtype="<f8").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise DataMismatchError(f"{path}: not a dataset file (bad magic)")
        version, n_cases, n_snap, n_sensors, nx, ny = struct.unpack("<IIIIII", fh.read(24))
        if version != _FORMAT_VERSION:
            raise DataMismatchError(f"{path}: unsupported dataset version {version}")
        x0, x1, y0, y1 = struct.unpack("<dddd", fh.read(32))
        (split_seed,) = struct.unpack("<Q", fh.read(8))
        norms = dict(zip(_NORM_KEYS, struct.unpack("<6d", fh.read(48))))
        grid = GridSpec(nx=nx, ny=ny, x_min=x0, x_max=x1, y_min=y0, y_max=y1)
        layout = SensorLayout()
        if layout.n_sensors != n_sensors:
            raise DataMismatchError(
                f"{path}: dataset has {n_sensors} sensors, layout expects {layout.n_sensors}"
            )
        cases, counts = [], []
        for _ in range(n_cases):
            cid, alpha, g, radius, gy0, gx0, _disturbed, count = struct.unpack(
                "<IdddddBI", fh.read(49))
            cases.append(FlowCase(cid, alpha, gust_strength=g, gust_radius=radius,
                                  gust_y0=gy0, gust_x0=gx0))
            counts.append(count)
        width = 1 + 3 * n_sensors + nx * ny + 1 + 3 + 1
        raw = np.frombuffer(fh.read(8 * n_snap * width), dtype="<f8")
        if raw.size != n_snap * width:
            raise DataMismatchError(f"{path}: truncated dataset file")
        rec = raw.reshape(n_snap, width).astype(np.float64)
        case_ids = np.concatenate([np.full(k, c.case_id, dtype=np.int64)
                                   for c, k in zip(cases, counts)])
        s = 3 * n_sensors
        omega = rec[:, 1 + s : 1 + s + nx * ny].reshape(n_snap, ny, nx)
        return Dataset(cases, case_ids, rec[:, 0].copy(), rec[:, 1 : 1 + s].copy(),
                       omega.copy(), rec[:, 1 + s + nx * ny].copy(),
                       rec[:, 2 + s + nx * ny : 5 + s + nx * ny].copy(),
                       rec[:, 5 + s + nx * ny] > 0.5, grid, layout, norms,
                       int(split_seed))


# --- companion CSV --------------------------------------------------------------


def format_float(x):
    """Shortest round-trip decimal form; keeps CSV output byte-stable."""
    return repr(float(x))


def export_csv(path, ds: Dataset):
    """Per-snapshot inspection rows (the vorticity window stays binary-only)."""
    n_p = ds.layout.n_sensors
    header = (["case_id", "t", "lift", "xi1", "xi2", "xi3", "is_validation"]
              + [f"p{i + 1}" for i in range(n_p)])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(ds)):
            row = [str(int(ds.case_ids[i])), format_float(ds.times[i]),
                   format_float(ds.lift[i])]
            row += [format_float(v) for v in ds.xi_true[i]]
            row.append(str(int(ds.is_validation[i])))
            row += [format_float(v) for v in ds.p_stacked[i, :n_p]]
            fh.write(",".join(row) + "\n")
