"""Built-in run configurations for the benchmark examples.

One table drives everything: reproduce commands, dumped TOML configs and the
acceptance suite all read the same dicts, so the recipes cannot drift apart.
Epoch budgets are deliberately looser than the typical convergence epoch
counts; initialization and sampling randomness move those by a few epochs.
"""

from __future__ import annotations

import copy
import math

_EX1 = {
    "system": {"label": "ex1_lti", "params": {}},
    "domains": {
        "r": [[0.3, 0.0], [0.0, 0.3]],
        "gamma_family": "constant",
        "gamma_params": {"matrix": [[0.25, 0.0], [0.0, 0.25]]},
        "t0": 0.0,
        "horizon": 1.0,
    },
    "network": {"hidden": [128], "seed": 0},
    "training": {
        "alpha1": 1.0,
        "alpha2": 1.0,
        "delta1": 1.0,
        "delta2": 0.1,
        "n_c": 5000,
        "n_b": 500,
        "n_t": 11,
        "n_0": 200,
        "minibatches": 100,
        "lr": 0.01,
        "lr_decay": 1e-5,
        "max_epochs": 50,
        "sampler_seed": 1,
        "shuffle_seed": 2,
    },
    "oracle": {"samples": 1000, "dt": 1e-3, "seed": 3},
    "output": {"dir": "out/ex1"},
}

_EX2 = {
    "system": {"label": "ex2_lakshmikantham", "params": {"k": 0.1}},
    "domains": {
        "r": [[1.0, 0.0], [0.0, 1.0]],
        "gamma_family": "ex2_scalar_mu",
        "gamma_params": {"k": 0.1, "r0": 1.0, "t0": 0.0, "scale": 0.8},
        "t0": 0.0,
        "horizon": 1.0,
    },
    "network": {"hidden": [32, 32, 32], "seed": 0},
    "training": {
        "alpha1": 5.0,
        "alpha2": 1.0,
        "delta1": 1.0,
        "delta2": 3.0,
        "n_c": 55000,
        "n_b": 200,
        "n_t": 11,
        "n_0": 700,
        "minibatches": 200,
        "lr": 0.003,
        "lr_decay": 1e-5,
        "max_epochs": 100,
        "sampler_seed": 1,
        "shuffle_seed": 2,
    },
    "oracle": {"samples": 10000, "dt": 1e-3, "seed": 3},
    "output": {"dir": "out/ex2"},
}

_EX3 = {
    "system": {"label": "ex3_pendulum", "params": {"g": 9.81, "m": 0.15, "l": 0.15, "b": 0.1}},
    "domains": {
        "r": [[4.0 / math.pi**2, 0.0], [0.0, 4.0 / math.pi**2]],
        "gamma_family": "ex3_rotating_diag",
        "gamma_params": {
            "d1": 2.0 / math.pi**2,
            "d2": 0.1 / math.pi**2,
            "rate1": 0.5,
            "rate2": 2.0,
            "omega": 0.2 * math.pi,
        },
        "t0": 0.0,
        "horizon": 2.0,
    },
    "network": {"hidden": [32, 32, 32], "seed": 0},
    "training": {
        "alpha1": 5.0,
        "alpha2": 1.0,
        "delta1": 0.1,
        "delta2": 1.0,
        "n_c": 60000,
        "n_b": 100,
        "n_t": 15,
        "n_0": 700,
        "minibatches": 500,
        "lr": 0.003,
        "lr_decay": 1e-5,
        "max_epochs": 150,
        "sampler_seed": 1,
        "shuffle_seed": 2,
    },
    "oracle": {"samples": 10000, "dt": 1e-3, "seed": 3},
    "output": {"dir": "out/ex3"},
}

# scalar expanding flow on nested fixed intervals: certifiably not FTS,
# exercised as the workflow's negative control
_NEG = {
    "system": {"label": "neg_scalar_exp", "params": {}},
    "domains": {
        "r": [[1.0]],
        "gamma_family": "constant",
        "gamma_params": {"matrix": [[1.0 / 1.44]]},
        "t0": 0.0,
        "horizon": 1.0,
    },
    "network": {"hidden": [32], "seed": 0},
    "training": {
        "alpha1": 1.0,
        "alpha2": 1.0,
        "delta1": 0.1,
        "delta2": 0.1,
        "n_c": 2000,
        "n_b": 50,
        "n_t": 11,
        "n_0": 100,
        "minibatches": 20,
        "lr": 0.01,
        "lr_decay": 1e-5,
        "max_epochs": 200,
        "sampler_seed": 1,
        "shuffle_seed": 2,
    },
    "oracle": {"samples": 100, "dt": 1e-3, "seed": 3},
    "output": {"dir": "out/neg_control"},
}

EXAMPLES = {"ex1": _EX1, "ex2": _EX2, "ex3": _EX3, "neg_control": _NEG}

REPRODUCE_IDS = ("ex1", "ex2", "ex3")


def example_config(example_id: str) -> dict:
    """Deep copy of the embedded configuration for one example."""
    if example_id not in EXAMPLES:
        raise KeyError(f"unknown example {example_id!r}; known: {sorted(EXAMPLES)}")
    return copy.deepcopy(EXAMPLES[example_id])


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot emit {type(v).__name__} as TOML")


def to_toml(config: dict) -> str:
    """Render a run configuration as TOML text (two table levels only)."""
    lines = []
    for section, body in config.items():
        lines.append(f"[{section}]")
        sub = []
        for key, val in body.items():
            if isinstance(val, dict):
                sub.append((key, val))
            else:
                lines.append(f"{key} = {_toml_value(val)}")
        for key, val in sub:
            lines.append("")
            lines.append(f"[{section}.{key}]")
            for k2, v2 in val.items():
                lines.append(f"{k2} = {_toml_value(v2)}")
        lines.append("")
    return "\n".join(lines)
