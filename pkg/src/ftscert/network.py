"""Scalar MLP certificate V(t, x) with exact gradients.

The network takes the stacked input u = [t, x1..xn], applies softplus hidden
layers and an affine output layer, and returns a scalar. Besides the value,
training needs two derivative objects computed here without any autodiff
framework:

* input gradients (dV/dt, dV/dx), via plain reverse mode over the layers;
* parameter gradients of losses that contain the orbital derivative
  dV/dt + dV/dx . f, which is a directional input derivative. Its value is
  obtained with a forward (tangent) sweep alongside the primal pass, and its
  parameter gradient with a reverse sweep over the combined primal+tangent
  tape. That reverse sweep is where the second derivative of softplus enters.

All arrays are float64. Batched helpers take U with shape (m, n+1), one
point per row, columns [t, x1..xn].
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, CheckpointVersionError, InputError

CHECKPOINT_VERSION = 1


def softplus(z):
    # max(z,0) + log1p(e^-|z|): exact for large |z|, no overflow
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def sigmoid_prime(z):
    s = sigmoid(z)
    return s * (1.0 - s)


@dataclass
class LyapunovNet:
    """MLP certificate candidate; weights[l] has shape (out, in)."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "softplus"

    def __post_init__(self):
        dims = list(self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise InputError(f"bad layer_dims {dims}")
        if dims[-1] != 1:
            raise InputError("output width must be 1")
        if dims[0] < 2:
            raise InputError("input width must be state dim + 1 (>= 2)")
        if self.activation != "softplus":
            raise InputError(f"unsupported activation {self.activation!r}")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l + 1], dims[l]) or b.shape != (dims[l + 1],):
                raise InputError(f"layer {l}: parameter shape mismatch")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise InputError(f"layer {l}: non-finite parameters")

    @property
    def state_dim(self) -> int:
        return self.layer_dims[0] - 1

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "LyapunovNet":
        return LyapunovNet(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def params(self) -> list[np.ndarray]:
        """Flat parameter list [W1, b1, W2, b2, ...] (shared arrays)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_params(self, flat: list[np.ndarray]) -> None:
        n = len(self.weights)
        self.weights = [flat[2 * l] for l in range(n)]
        self.biases = [flat[2 * l + 1] for l in range(n)]


@dataclass
class InputGradient:
    dv_dt: float
    dv_dx: np.ndarray


@dataclass
class ParamGradient:
    """Loss gradient, shape-congruent with the owning net's parameters."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @staticmethod
    def zeros_like(net: LyapunovNet) -> "ParamGradient":
        return ParamGradient(
            [np.zeros_like(w) for w in net.weights],
            [np.zeros_like(b) for b in net.biases],
        )

    def add_(self, other: "ParamGradient") -> "ParamGradient":
        for a, b in zip(self.weights, other.weights):
            a += b
        for a, b in zip(self.biases, other.biases):
            a += b
        return self


def init_net(layer_dims, rng_seed: int) -> LyapunovNet:
    """Glorot-uniform weights, zero biases; reproducible under the seed."""
    dims = list(int(d) for d in layer_dims)
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return LyapunovNet(dims, weights, biases)


def _as_input_rows(net: LyapunovNet, t, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
    if x.shape[1] != net.state_dim:
        raise InputError(
            f"state dim {x.shape[1]} != network state dim {net.state_dim}"
        )
    return np.column_stack([t, x])


def _forward_pass(net: LyapunovNet, u: np.ndarray):
    """Returns (values (m,), hidden activations [a0..], hidden preacts [z1..])."""
    acts = [u]
    zs = []
    a = u
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ w.T + b
        zs.append(z)
        a = softplus(z)
        acts.append(a)
    v = a @ net.weights[-1].T + net.biases[-1]
    return v[:, 0], acts, zs


def _tangent_pass(net: LyapunovNet, u: np.ndarray, d0: np.ndarray):
    """Primal pass plus forward-mode sweep along per-row directions d0.

    Returns (values, directional derivatives, acts, zs, tangents [d0..],
    tangent preacts [e1..]); the caches feed vdot_param_gradient.
    """
    acts = [u]
    zs = []
    ds = [d0]
    es = []
    a, d = u, d0
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ w.T + b
        e = d @ w.T
        sig = sigmoid(z)
        a = softplus(z)
        d = sig * e
        zs.append(z)
        es.append(e)
        acts.append(a)
        ds.append(d)
    wl = net.weights[-1]
    v = a @ wl.T + net.biases[-1]
    vdot = d @ wl.T
    return v[:, 0], vdot[:, 0], acts, zs, ds, es


def forward_batch(net: LyapunovNet, u: np.ndarray) -> np.ndarray:
    return _forward_pass(net, np.asarray(u, dtype=float))[0]


def forward(net: LyapunovNet, t: float, x) -> float:
    """Network value V(t, x)."""
    return float(forward_batch(net, _as_input_rows(net, t, x))[0])


def input_gradient_batch(net: LyapunovNet, u: np.ndarray) -> np.ndarray:
    """dV/du for every row of u; shape (m, n+1), columns [d/dt, d/dx...]."""
    u = np.asarray(u, dtype=float)
    _, acts, zs = _forward_pass(net, u)
    g = np.broadcast_to(net.weights[-1][0], (u.shape[0], net.layer_dims[-2]))
    for l in range(len(zs) - 1, -1, -1):
        g = (sigmoid(zs[l]) * g) @ net.weights[l]
    return g


def input_gradient(net: LyapunovNet, t: float, x) -> InputGradient:
    """Exact (dV/dt, dV/dx) by reverse mode through the layers."""
    g = input_gradient_batch(net, _as_input_rows(net, t, x))[0]
    return InputGradient(dv_dt=float(g[0]), dv_dx=g[1:].copy())


def vdot_batch(net: LyapunovNet, u: np.ndarray, d0: np.ndarray) -> np.ndarray:
    """Directional derivative of V along the rows of d0 (a JVP).

    With d0 = [1, f(t, x)] this is the orbital derivative; every orbital
    derivative in the package funnels through this one code path.
    """
    u = np.asarray(u, dtype=float)
    d0 = np.asarray(d0, dtype=float)
    return _tangent_pass(net, u, d0)[1]


def orbital_derivative(net: LyapunovNet, sys, t: float, x) -> float:
    """V̇(t,x) = dV/dt + dV/dx . f(t,x) along the given vector field."""
    u = _as_input_rows(net, t, x)
    f = np.asarray(sys.eval(float(t), np.asarray(x, dtype=float)), dtype=float)
    d0 = np.column_stack([np.ones(1), f[None, :]])
    return float(vdot_batch(net, u, d0)[0])


def value_param_gradient(net: LyapunovNet, u: np.ndarray, w: np.ndarray) -> ParamGradient:
    """Gradient of sum_i w_i * V(u_i) w.r.t. every weight and bias."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    _, acts, zs = _forward_pass(net, u)
    gw = [None] * len(net.weights)
    gb = [None] * len(net.biases)
    gw[-1] = w[None, :] @ acts[-1]
    gb[-1] = np.array([w.sum()])
    ubar = np.outer(w, net.weights[-1][0])
    for l in range(len(zs) - 1, -1, -1):
        zbar = sigmoid(zs[l]) * ubar
        gw[l] = zbar.T @ acts[l]
        gb[l] = zbar.sum(axis=0)
        ubar = zbar @ net.weights[l]
    return ParamGradient(gw, gb)


def _vdot_reverse(net: LyapunovNet, acts, zs, ds, es, w: np.ndarray) -> ParamGradient:
    """Reverse sweep for sum_i w_i * Vdot_i over a cached primal+tangent tape.

    Each hidden layer receives adjoints for both its activation a_l and its
    tangent d_l; the mixed term sigmoid'(z) * e * dbar carries the
    second-order dependence of the directional derivative on pre-activations.
    """
    gw = [None] * len(net.weights)
    gb = [None] * len(net.biases)
    gw[-1] = w[None, :] @ ds[-1]
    gb[-1] = np.zeros(1)
    dbar = np.outer(w, net.weights[-1][0])
    abar = np.zeros_like(dbar)
    for l in range(len(zs) - 1, -1, -1):
        sig = sigmoid(zs[l])
        zbar = sig * abar + sigmoid_prime(zs[l]) * es[l] * dbar
        ebar = sig * dbar
        gw[l] = zbar.T @ acts[l] + ebar.T @ ds[l]
        gb[l] = zbar.sum(axis=0)
        abar = zbar @ net.weights[l]
        dbar = ebar @ net.weights[l]
    return ParamGradient(gw, gb)


def vdot_param_gradient(
    net: LyapunovNet, u: np.ndarray, d0: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, ParamGradient]:
    """Gradient of sum_i w_i * Vdot_i w.r.t. parameters; returns (vdot, grad)."""
    u = np.asarray(u, dtype=float)
    d0 = np.asarray(d0, dtype=float)
    w = np.asarray(w, dtype=float)
    _, vdot, acts, zs, ds, es = _tangent_pass(net, u, d0)
    return vdot, _vdot_reverse(net, acts, zs, ds, es, w)


@dataclass
class LossContext:
    """One loss evaluation: interior batch, full boundary and initial sets.

    interior_dir rows are [1, f(t_i, x_i)]; initial_u rows carry t0 in the
    first column. Weights/margins mirror the loss configuration.
    """

    interior_u: np.ndarray
    interior_dir: np.ndarray
    boundary_u: np.ndarray
    initial_u: np.ndarray
    alpha1: float
    alpha2: float
    delta1: float
    delta2: float


@dataclass
class LossValue:
    total: float
    l1: float
    l2: float
    sup0: float


def loss_param_gradient(net: LyapunovNet, ctx: LossContext) -> tuple[LossValue, ParamGradient]:
    """Value and parameter gradient of the weighted hinge-square loss.

    The interior term needs the gradient of the orbital derivative
    (vdot_param_gradient); the boundary term backpropagates plain values,
    including the initial point realizing the discrete supremum.
    """
    if ctx.interior_u.shape[0] == 0 or ctx.boundary_u.shape[0] == 0:
        raise InputError("empty interior batch or boundary set")
    if ctx.initial_u.shape[0] == 0:
        raise InputError("empty initial set")

    m = ctx.interior_u.shape[0]
    _, vdot, acts, zs, ds, es = _tangent_pass(net, ctx.interior_u, ctx.interior_dir)
    act1 = np.maximum(vdot + ctx.delta1, 0.0)
    l1 = float(np.mean(act1**2))
    if np.any(act1 > 0.0):
        w1 = ctx.alpha1 * (2.0 / m) * act1
        grad = _vdot_reverse(net, acts, zs, ds, es, w1)
    else:
        grad = ParamGradient.zeros_like(net)

    v0 = forward_batch(net, ctx.initial_u)
    j_star = int(np.argmax(v0))
    sup0 = float(v0[j_star])

    nb = ctx.boundary_u.shape[0]
    vb = forward_batch(net, ctx.boundary_u)
    act2 = np.maximum(sup0 - vb + ctx.delta2, 0.0)
    l2 = float(np.mean(act2**2))
    if np.any(act2 > 0.0):
        w2 = ctx.alpha2 * (2.0 / nb) * act2
        rows = np.vstack([ctx.boundary_u, ctx.initial_u[j_star][None, :]])
        wts = np.concatenate([-w2, [w2.sum()]])
        grad.add_(value_param_gradient(net, rows, wts))

    total = ctx.alpha1 * l1 + ctx.alpha2 * l2
    return LossValue(total=total, l1=l1, l2=l2, sup0=sup0), grad


def value_fn(v):
    """Adapter: LyapunovNet or callable v(t, x) -> batched (ts, xs) -> values."""
    if isinstance(v, LyapunovNet):
        def batched(ts, xs):
            ts = np.broadcast_to(np.asarray(ts, dtype=float), (len(xs),))
            return forward_batch(v, np.column_stack([ts, xs]))
        return batched

    def batched(ts, xs):
        ts = np.broadcast_to(np.asarray(ts, dtype=float), (len(xs),))
        return np.array([float(v(t, x)) for t, x in zip(ts, xs)])
    return batched


def config_digest(config: dict) -> str:
    """Stable digest of a run configuration, recorded in checkpoints."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return "sha256:" + hashlib.sha256(blob).hexdigest()


def save_checkpoint(net: LyapunovNet, path, rng_seed=None, digest=None) -> None:
    """Write the net as JSON; float round-trip is bit-exact."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "layer_dims": list(net.layer_dims),
        "activation": net.activation,
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "rng_seed": rng_seed,
        "config_digest": digest,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path) -> LyapunovNet:
    """Read a checkpoint; malformed content raises CheckpointError."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError("<document>", f"not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise CheckpointError("<document>", "top level is not an object")
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            "format_version", f"expected {CHECKPOINT_VERSION}, found {version!r}"
        )
    for key in ("layer_dims", "activation", "weights", "biases"):
        if key not in doc:
            raise CheckpointError(key, "missing")
    dims = doc["layer_dims"]
    if (
        not isinstance(dims, list)
        or len(dims) < 2
        or not all(isinstance(d, int) and d > 0 for d in dims)
    ):
        raise CheckpointError("layer_dims", f"bad value {dims!r}")
    n_layers = len(dims) - 1
    if len(doc["weights"]) != n_layers or len(doc["biases"]) != n_layers:
        raise CheckpointError("weights", "layer count does not match layer_dims")
    weights, biases = [], []
    for l in range(n_layers):
        shape = (dims[l + 1], dims[l])
        w = np.asarray(doc["weights"][l], dtype=float)
        if w.size != shape[0] * shape[1]:
            raise CheckpointError(f"weights[{l}]", f"expected {shape[0] * shape[1]} entries")
        b = np.asarray(doc["biases"][l], dtype=float)
        if b.size != shape[0]:
            raise CheckpointError(f"biases[{l}]", f"expected {shape[0]} entries")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise CheckpointError(f"weights[{l}]", "non-finite parameter")
        weights.append(w.reshape(shape))
        biases.append(b)
    try:
        return LyapunovNet(dims, weights, biases, doc["activation"])
    except InputError as exc:
        raise CheckpointError("activation", str(exc)) from exc
