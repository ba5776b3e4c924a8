"""Quadratic/LTV cross-checks for trained certificates.

For a linear system the certificate conditions collapse to pointwise matrix
inequalities in a quadratic form x'Px: decrease of the flow quadratic,
covering of the trajectory ellipsoid, and containment inside the initial
one. This module fits a quadratic to a trained network, verifies those
inequalities on a time grid, and builds the exact transition-matrix
certificate Q(t) for comparison.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import network
from .domains import sym_inv_sqrt
from .errors import ConditioningWarning, FitError, InputError
from .network import LyapunovNet

_SYM_TOL = 1e-9


@dataclass
class QuadraticForm:
    """Symmetric matrix P of the quadratic x'Px (symmetrized on build)."""

    p_matrix: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_matrix, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise InputError(f"P must be square, got {p.shape}")
        self.p_matrix = 0.5 * (p + p.T)

    def value(self, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return np.einsum("ij,jk,ik->i", xs, self.p_matrix, xs)


def _check_symmetric(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if not np.allclose(m, m.T, atol=_SYM_TOL):
        raise InputError(f"{name} is not symmetric")
    return 0.5 * (m + m.T)


def quadratic_fit(net: LyapunovNet, t0: float, xs) -> tuple[QuadraticForm, float]:
    """Least-squares quadratic of V(t0, x) - V(t0, 0) in the monomials
    x_i x_j; returns the symmetric P and the RMS residual."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n = xs.shape[1]
    n_mono = n * (n + 1) // 2
    if xs.shape[0] < n_mono + 1:
        raise InputError(f"need at least {n_mono + 1} fit points, got {xs.shape[0]}")
    cols = []
    pairs = []
    for i in range(n):
        for j in range(i, n):
            cols.append(xs[:, i] * xs[:, j])
            pairs.append((i, j))
    design = np.column_stack(cols)
    v0 = network.forward(net, t0, np.zeros(n))
    y = network.forward_batch(net, np.column_stack([np.full(len(xs), t0), xs])) - v0
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < n_mono:
        raise FitError(f"design matrix rank {rank} < {n_mono}")
    p = np.zeros((n, n))
    for c, (i, j) in zip(coef, pairs):
        if i == j:
            p[i, i] = c
        else:
            p[i, j] = p[j, i] = 0.5 * c
    resid = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    return QuadraticForm(p), resid


@dataclass
class DlmiReport:
    """Per-grid-time eigenvalue extremes of the three matrix conditions."""

    times: np.ndarray
    lam_max_flow: np.ndarray  # lammax(Pdot + P A' + A P), must stay < 0
    lam_min_cover: np.ndarray  # lammin(P - Gamma(t)), must stay > 0
    lam_max_initial: float  # lammax(P(t0) - R), must be < 0
    flow_ok: bool
    cover_ok: bool
    initial_ok: bool

    @property
    def passed(self) -> bool:
        return self.flow_ok and self.cover_ok and self.initial_ok

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "flow_ok": self.flow_ok,
            "cover_ok": self.cover_ok,
            "initial_ok": self.initial_ok,
            "lam_max_initial": self.lam_max_initial,
            "times": self.times.tolist(),
            "lam_max_flow": self.lam_max_flow.tolist(),
            "lam_min_cover": self.lam_min_cover.tolist(),
        }


def check_dlmi(p, a_of_t, gamma_of_t, r, time_grid) -> DlmiReport:
    """Verify the three pointwise conditions on the grid.

    p is either a constant matrix/QuadraticForm (Pdot = 0) or a sequence of
    per-grid-time matrices, in which case Pdot is finite-differenced across
    slices."""
    grid = np.asarray(time_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 1:
        raise InputError("time grid must be a nonempty 1-D array")
    r = _check_symmetric(r, "R")
    if isinstance(p, QuadraticForm):
        p = p.p_matrix
    p = np.asarray(p, dtype=float)
    if p.ndim == 2:
        p_seq = np.broadcast_to(_check_symmetric(p, "P"), (len(grid),) + p.shape)
        pdot = np.zeros_like(p_seq)
    else:
        if p.shape[0] != len(grid):
            raise InputError("P sequence length must match the time grid")
        p_seq = np.stack([_check_symmetric(pk, f"P[{k}]") for k, pk in enumerate(p)])
        pdot = np.gradient(p_seq, grid, axis=0)

    lam_flow = np.empty(len(grid))
    lam_cover = np.empty(len(grid))
    for k, t in enumerate(grid):
        a = np.asarray(a_of_t(float(t)), dtype=float)
        g = _check_symmetric(gamma_of_t(float(t)), f"Gamma({t})")
        flow = pdot[k] + p_seq[k] @ a.T + a @ p_seq[k]
        lam_flow[k] = np.linalg.eigvalsh(0.5 * (flow + flow.T)).max()
        lam_cover[k] = np.linalg.eigvalsh(p_seq[k] - g).min()
    lam_init = float(np.linalg.eigvalsh(p_seq[0] - r).max())
    return DlmiReport(
        times=grid,
        lam_max_flow=lam_flow,
        lam_min_cover=lam_cover,
        lam_max_initial=lam_init,
        flow_ok=bool(np.all(lam_flow < 0.0)),
        cover_ok=bool(np.all(lam_cover > 0.0)),
        initial_ok=lam_init < 0.0,
    )


def scale_lyapunov(obj, beta: float):
    """Multiply a certificate by beta > 0: output layer for a net, P for a
    quadratic form. Scaling preserves sign patterns of every condition."""
    if beta <= 0.0:
        raise InputError("beta must be positive")
    if isinstance(obj, QuadraticForm):
        return QuadraticForm(beta * obj.p_matrix)
    if isinstance(obj, LyapunovNet):
        out = obj.copy()
        out.weights[-1] = beta * out.weights[-1]
        out.biases[-1] = beta * out.biases[-1]
        return out
    raise InputError(f"cannot scale object of type {type(obj).__name__}")


def scaling_interval(p, gamma_of_t, r, time_grid) -> tuple[float, float]:
    """Interval of beta for which beta*P covers Gamma(t) on the grid and
    stays below R; empty when lo >= hi."""
    if isinstance(p, QuadraticForm):
        p = p.p_matrix
    p = _check_symmetric(p, "P")
    w = np.linalg.eigvalsh(p)
    if w.min() <= 0.0:
        raise InputError("P must be positive-definite to scale")
    m = sym_inv_sqrt(p)
    r = _check_symmetric(r, "R")
    lo = 0.0
    for t in np.asarray(time_grid, dtype=float):
        g = _check_symmetric(gamma_of_t(float(t)), f"Gamma({t})")
        lo = max(lo, float(np.linalg.eigvalsh(m @ g @ m).max()))
    hi = float(np.linalg.eigvalsh(m @ r @ m).min())
    return lo, hi


def state_transition_q(a_of_t, r, t0: float, time_grid, dt: float = 1e-3) -> np.ndarray:
    """Q(t) built from the transition matrix: integrate Phi' = A(t) Phi from
    t0, invert, and congruence-transform R. Q(t0) equals R up to integrator
    tolerance. Returns one matrix per grid time."""
    grid = np.asarray(time_grid, dtype=float)
    if np.any(np.diff(grid) <= 0.0):
        raise InputError("time grid must be strictly increasing")
    if grid[0] < t0 - 1e-12:
        raise InputError("grid starts before t0")
    r = _check_symmetric(r, "R")
    n = r.shape[0]

    def a_mat(t):
        return np.asarray(a_of_t(float(t)), dtype=float)

    def rk4_mat(t, phi, h):
        k1 = a_mat(t) @ phi
        k2 = a_mat(t + 0.5 * h) @ (phi + 0.5 * h * k1)
        k3 = a_mat(t + 0.5 * h) @ (phi + 0.5 * h * k2)
        k4 = a_mat(t + h) @ (phi + h * k3)
        return phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    out = np.empty((len(grid), n, n))
    phi = np.eye(n)
    t = t0
    warned = False
    for k, tk in enumerate(grid):
        while t < tk - 1e-12:
            h = min(dt, tk - t)
            phi = rk4_mat(t, phi, h)
            t += h
        if not warned and np.linalg.cond(phi) > 1e12:
            warnings.warn(
                f"transition matrix nearly singular at t = {tk:g}", ConditioningWarning
            )
            warned = True
        inv = np.linalg.inv(phi)
        q = inv.T @ r @ inv
        out[k] = 0.5 * (q + q.T)
    return out
