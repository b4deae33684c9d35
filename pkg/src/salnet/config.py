"""Experiment configuration: INI file, then SALNET_<SECTION>_<KEY> environment variables, then CLI flags."""
from __future__ import annotations

import configparser
import os
from pathlib import Path

from .cnn.solver import SolverConfig

# (type, default); None means "unset"
SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "channels": {
        "config": (str, "4k"),
    },
    "sampler": {
        "t": (int, 16),
        "epsilon": (float, 0.04),
        "j": (int, 5),
        "max_per_frame": (int, 10),
        "nonsalient_per_frame": (int, None),
        "sigma_px": (float, None),
        "balance": (bool, True),
        "seed": (int, 0),
    },
    "arch": {
        "preset": (str, "default"),
        "filler": (str, "msra"),
        "weight_std": (float, 0.01),
        "seed": (int, 0),
    },
    "solver": {
        "learning_rate": (float, 0.01),
        "momentum": (float, 0.9),
        "batch_size": (int, 256),
        "epochs": (int, 20),
        "max_iterations": (int, 17400),
        "validation_interval": (int, 1000),
        "strategy": (str, "per_epoch_full_pass"),
        "seed": (int, 0),
        "lr_gamma": (float, 0.1),
        "lr_steps": (int, 3),
        "weight_decay": (float, 0.0),
        "val_fraction": (float, 0.2),
    },
    "predict": {
        "batch_size": (int, 256),
        "pgm": (bool, False),
    },
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


def _convert(section, key, raw):
    kind, _ = SCHEMA[section][key]
    raw = raw.strip()
    if raw.lower() in ("", "none"):
        return None
    try:
        if kind is bool:
            if raw.lower() in _TRUE:
                return True
            if raw.lower() in _FALSE:
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r} as {kind.__name__}") from None


def defaults() -> dict[str, dict]:
    return {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}


def load_config(path: str | Path | None = None, environ=None) -> dict[str, dict]:
    cfg = defaults()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
                cfg[section][key] = _convert(section, key, raw)
    environ = os.environ if environ is None else environ
    for section, keys in SCHEMA.items():
        for key in keys:
            name = f"SALNET_{section.upper()}_{key.upper()}"
            if name in environ:
                cfg[section][key] = _convert(section, key, environ[name])
    return cfg


def override(cfg: dict, section: str, **values) -> dict:
    """Apply flag values that are not None."""
    for key, value in values.items():
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        if value is not None:
            cfg[section][key] = value
    return cfg


def solver_config(cfg: dict) -> SolverConfig:
    s = dict(cfg["solver"])
    s.pop("val_fraction")
    return SolverConfig(**s)
