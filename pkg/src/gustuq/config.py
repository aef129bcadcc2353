"""Flat key = value run configuration.

One `key = value` pair per line, `#` starts a comment, UTF-8. Defaults carry
the published operating point: dropout 0.05, weight decay 1e-7, T = 100
forward passes, M = 100 decoded samples, 99% Gramian energy threshold, and
sensor-noise variance 2.5e-5. The effective configuration (defaults merged
with the file and any seed override) is echoed into a manifest next to every
command's outputs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .errors import ConfigError

ENV_DATA_DIR = "GUQ_DATA_DIR"


@dataclass
class RunConfig:
    # pipeline paths, resolved against data_dir when relative
    data_dir: str = ""
    dataset: str = "dataset.guqd"
    latents: str = "latents.csv"
    ae_prefix: str = "ae"
    estimator_prob: str = "estimator_prob.guqm"
    estimator_det: str = "estimator_det.guqm"
    out_dir: str = "reports"

    # generation
    preset: str = "desk"
    write_csv: bool = True
    seed: int = 0

    # published operating point
    dropout_rate: float = 0.05
    weight_decay: float = 1e-7
    T: int = 100
    M: int = 100
    gamma: float = 0.99
    sigma_x2: float = 2.5e-5

    # training
    batch_size: int = 256
    learning_rate: float = 1e-3
    ae_max_epochs: int = 2000
    ae_patience: int = 200
    est_max_epochs: int = 2000
    est_patience: int = 500
    augment_copies: int = 1

    # evaluation / sensitivity
    eval_cases: str = "auto"
    gramian_samples: int = 100
    sensitivity_case: str = "auto"
    sensitivity_modes: int = 2

    def __post_init__(self):
        if not self.data_dir:
            self.data_dir = os.environ.get(ENV_DATA_DIR, ".")
        if self.dropout_rate < 0 or self.dropout_rate >= 1:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.T < 2 or self.M < 2:
            raise ConfigError("T and M must be >= 2")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.sigma_x2 < 0:
            raise ConfigError(f"sigma_x2 must be >= 0, got {self.sigma_x2}")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    def path(self, name):
        p = getattr(self, name)
        return p if os.path.isabs(p) else os.path.join(self.data_dir, p)


_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False,
               "yes": True, "no": False}


def _parse_value(raw, target_type):
    if target_type is bool:
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise ConfigError(f"expected a boolean, got {raw!r}")
        return _BOOL_WORDS[word]
    if target_type is int:
        return int(raw, 0)
    if target_type is float:
        return float(raw)
    return raw


def parse_config_text(text) -> dict:
    """key = value lines into a raw string dict; duplicate keys keep the last
    occurrence, blank lines and # comments are skipped."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path=None, overrides=None) -> RunConfig:
    """Build a RunConfig from an optional file plus overrides (e.g. the
    --seed flag). Unknown keys are errors."""
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    known = {f.name: f.type for f in fields(RunConfig)}
    types = {name: (bool if t in ("bool", bool) else int if t in ("int", int)
                    else float if t in ("float", float) else str)
             for name, t in known.items()}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kwargs[key] = _parse_value(value, types[key])
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    if overrides:
        kwargs.update(overrides)
    return RunConfig(**kwargs)


def manifest_text(cfg: RunConfig) -> str:
    """The effective configuration in the same flat format, key-sorted."""
    lines = ["# effective configuration"]
    for f in sorted(fields(RunConfig), key=lambda f: f.name):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def write_manifest(path, cfg: RunConfig, extra=None):
    text = manifest_text(cfg)
    if extra:
        text += "# run facts\n"
        for key in sorted(extra):
            text += f"{key} = {extra[key]}\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
