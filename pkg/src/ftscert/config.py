"""Run-configuration schema: TOML loading, validation and object builders.

The file format has five sections ([system], [domains], [network],
[training], [output]) plus an optional [oracle] section. Unknown sections or
keys are rejected outright so typos fail loudly instead of silently falling
back to defaults. FTS_SEED in the environment overrides every seed for CI
determinism.
"""

from __future__ import annotations

import math
import os
import sys

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

import numpy as np

from .domains import DomainSpec, InitialSet, make_gamma_family
from .dynamics import VectorField, make_system
from .errors import ConfigError
from .loss import CollocationSizes, LossConfig
from .trainer import Seeds, TestGridConfig, TrainConfig

REQUIRED = object()

_NUM = (int, float)

SCHEMA = {
    "system": {"label": (str, REQUIRED), "params": (dict, {})},
    "domains": {
        "r": (list, REQUIRED),
        "gamma_family": (str, REQUIRED),
        "gamma_params": (dict, {}),
        "t0": (_NUM, 0.0),
        "horizon": (_NUM, REQUIRED),
    },
    "network": {"hidden": (list, REQUIRED), "seed": (int, 0)},
    "training": {
        "alpha1": (_NUM, 1.0),
        "alpha2": (_NUM, 1.0),
        "delta1": (_NUM, 0.0),
        "delta2": (_NUM, 0.1),
        "n_c": (int, REQUIRED),
        "n_b": (int, REQUIRED),
        "n_t": (int, REQUIRED),
        "n_0": (int, REQUIRED),
        "minibatches": (int, None),
        "batch_size": (int, None),
        "lr": (_NUM, 0.001),
        "lr_decay": (_NUM, 0.0),
        "beta1": (_NUM, 0.9),
        "beta2": (_NUM, 0.999),
        "epsilon": (_NUM, 1e-8),
        "max_epochs": (int, 500),
        "sampler_seed": (int, 1),
        "shuffle_seed": (int, 2),
        "augment_retry": (int, 0),
        "test_slices": (int, 21),
        "test_density": (int, 50),
        "test_boundary_per_slice": (int, 200),
    },
    "oracle": {"samples": (int, 1000), "dt": (_NUM, 1e-3), "seed": (int, 3)},
    "output": {"dir": (str, "out")},
}

_OPTIONAL_SECTIONS = ("oracle",)


def load_config(path) -> dict:
    """Parse and validate a TOML run configuration."""
    try:
        with open(path, "rb") as fh:
            raw = _toml.load(fh)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return validate_config(raw, source=str(path))


def validate_config(raw: dict, source: str = "<config>") -> dict:
    """Check sections, keys and value types; fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a table")
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    cfg = {}
    for section, keys in SCHEMA.items():
        body = raw.get(section)
        if body is None:
            if section in _OPTIONAL_SECTIONS:
                body = {}
            elif all(default is not REQUIRED for (_, default) in keys.values()):
                body = {}
            else:
                raise ConfigError(f"{source}: missing section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"{source}: [{section}] must be a table")
        bad = set(body) - set(keys)
        if bad:
            raise ConfigError(f"{source}: [{section}] unknown key(s) {sorted(bad)}")
        out = {}
        for key, (typ, default) in keys.items():
            if key in body:
                val = body[key]
                if isinstance(val, bool) or not isinstance(val, typ):
                    raise ConfigError(
                        f"{source}: [{section}] key '{key}' has type "
                        f"{type(val).__name__}, expected {_typename(typ)}"
                    )
                out[key] = val
            elif default is REQUIRED:
                raise ConfigError(f"{source}: [{section}] missing required key '{key}'")
            else:
                out[key] = default
        cfg[section] = out

    tr = cfg["training"]
    if tr["minibatches"] is not None and tr["batch_size"] is not None:
        raise ConfigError(f"{source}: [training] give minibatches or batch_size, not both")
    if tr["minibatches"] is None:
        if tr["batch_size"] is not None:
            tr["minibatches"] = max(1, math.ceil(tr["n_c"] / tr["batch_size"]))
        else:
            tr["minibatches"] = 100
    del tr["batch_size"]

    _validate_matrix(cfg["domains"]["r"], source, "domains", "r")
    hidden = cfg["network"]["hidden"]
    if not hidden or not all(isinstance(h, int) and h > 0 for h in hidden):
        raise ConfigError(f"{source}: [network] hidden must be a list of positive ints")
    return cfg


def _typename(typ) -> str:
    if typ is _NUM:
        return "number"
    return typ.__name__ if isinstance(typ, type) else "/".join(t.__name__ for t in typ)


def _validate_matrix(rows, source, section, key):
    if not rows or not all(isinstance(r, list) and len(r) == len(rows) for r in rows):
        raise ConfigError(f"{source}: [{section}] key '{key}' must be a square matrix")
    for r in rows:
        for v in r:
            if isinstance(v, bool) or not isinstance(v, _NUM):
                raise ConfigError(f"{source}: [{section}] key '{key}' has a non-numeric entry")


def apply_seed_override(cfg: dict, env=os.environ) -> dict:
    """FTS_SEED=S pins every seed: net S, sampler S+1, shuffle S+2, oracle S+3."""
    raw = env.get("FTS_SEED")
    if raw is None:
        return cfg
    try:
        s = int(raw)
    except ValueError:
        raise ConfigError(f"FTS_SEED must be an integer, got {raw!r}") from None
    cfg["network"]["seed"] = s
    cfg["training"]["sampler_seed"] = s + 1
    cfg["training"]["shuffle_seed"] = s + 2
    cfg["oracle"]["seed"] = s + 3
    return cfg


def build_system(cfg: dict) -> VectorField:
    return make_system(cfg["system"]["label"], **cfg["system"]["params"])


def build_domain(cfg: dict) -> DomainSpec:
    dom_cfg = cfg["domains"]
    r = np.asarray(dom_cfg["r"], dtype=float)
    family = make_gamma_family(dom_cfg["gamma_family"], **dom_cfg["gamma_params"])
    if family.n != r.shape[0]:
        raise ConfigError(
            f"[domains] R is {r.shape[0]}x{r.shape[0]} but gamma family has n = {family.n}"
        )
    return DomainSpec(
        initial=InitialSet(r),
        trajectory=family,
        t0=float(dom_cfg["t0"]),
        horizon=float(dom_cfg["horizon"]),
    )


def build_train_config(cfg: dict) -> TrainConfig:
    tr = cfg["training"]
    return TrainConfig(
        loss=LossConfig(
            alpha1=float(tr["alpha1"]),
            alpha2=float(tr["alpha2"]),
            delta1=float(tr["delta1"]),
            delta2=float(tr["delta2"]),
        ),
        sizes=CollocationSizes(tr["n_c"], tr["n_b"], tr["n_t"], tr["n_0"]),
        hidden=list(cfg["network"]["hidden"]),
        n_minibatches=tr["minibatches"],
        lr0=float(tr["lr"]),
        beta1=float(tr["beta1"]),
        beta2=float(tr["beta2"]),
        eps=float(tr["epsilon"]),
        lr_decay=float(tr["lr_decay"]),
        max_epochs=tr["max_epochs"],
        seeds=Seeds(
            net=cfg["network"]["seed"],
            sampler=tr["sampler_seed"],
            shuffle=tr["shuffle_seed"],
        ),
        test=TestGridConfig(
            n_slices=tr["test_slices"],
            density=tr["test_density"],
            boundary_per_slice=tr["test_boundary_per_slice"],
        ),
        augment_retry=tr["augment_retry"],
    )
