"""Initial set and time-varying trajectory domains, plus collocation samplers.

Concrete domains are ellipsoids: the initial set {x : x'Rx <= 1} and the
family {x : x'G(t)x < 1}. Everything downstream touches domains only through
membership tests, boundary samples and bounding boxes, so other shapes can
implement DomainFamily later; only the ellipsoidal form ships for now.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DegenerateDomainError, DomainDefinitenessError, InputError

_T_TOL = 1e-9


def quad_form(m: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """x'Mx for each row of xs."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    return np.einsum("ij,jk,ik->i", xs, m, xs)


def quad_form_many(ms: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """x_i' M_i x_i with one matrix per row."""
    return np.einsum("ij,ijk,ik->i", xs, ms, xs)


def sym_inv_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root of a positive-definite matrix."""
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    if w.min() <= 0.0:
        raise DomainDefinitenessError(f"matrix not positive-definite (min eig {w.min():g})")
    return (v / np.sqrt(w)) @ v.T


def sphere_directions(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """m unit vectors; for n = 1 the two signs alternate deterministically."""
    if n == 1:
        return np.array([[1.0 if i % 2 == 0 else -1.0] for i in range(m)])
    g = rng.standard_normal((m, n))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms < 1e-12):  # essentially unreachable, kept for safety
        bad = norms < 1e-12
        g[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None]


def sample_ellipsoid_closure(g: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """m points uniform in {x : x'Gx <= 1} by rejection in the bounding box."""
    n = g.shape[0]
    half = np.sqrt(np.diag(np.linalg.inv(g)))
    out = np.empty((m, n))
    filled = 0
    proposals = 0
    while filled < m:
        k = max(m - filled, 64)
        cand = rng.uniform(-1.0, 1.0, size=(k, n)) * half
        ok = quad_form(g, cand) <= 1.0
        take = cand[ok][: m - filled]
        out[filled : filled + take.shape[0]] = take
        filled += take.shape[0]
        proposals += k
        if proposals > 10_000 and filled / proposals < 1e-3:
            raise DegenerateDomainError(
                f"ellipsoid rejection acceptance {filled / proposals:.2e} < 1e-3"
            )
    return out


def sample_ellipsoid_boundary(g: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """m points with x'Gx = 1, mapped from unit directions via G^{-1/2}."""
    return sphere_directions(g.shape[0], m, rng) @ sym_inv_sqrt(g)


class DomainFamily(abc.ABC):
    """Surface a trajectory-domain family must expose to the samplers.

    Any shape providing these four queries plugs into the collocation and
    verification machinery; v1 ships only the ellipsoidal implementation.
    """

    n: int

    @abc.abstractmethod
    def closure_contains(self, t: float, x) -> np.ndarray: ...

    @abc.abstractmethod
    def boundary_sample(self, t: float, m: int, rng: np.random.Generator) -> np.ndarray: ...

    @abc.abstractmethod
    def bounding_box(self, t: float) -> np.ndarray:
        """Half-widths of an axis-aligned box containing the closure."""


@dataclass
class EllipsoidFamily(DomainFamily):
    """Time-varying ellipsoid {x : x'G(t)x < 1}; G(t) symmetric PD on J."""

    n: int
    gamma: Callable[[float], np.ndarray]
    label: str = "custom"
    gamma_many_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def gamma_at(self, t: float) -> np.ndarray:
        g = np.asarray(self.gamma(float(t)), dtype=float)
        if g.shape != (self.n, self.n):
            raise DomainDefinitenessError(f"gamma({t}) has shape {g.shape}")
        g = 0.5 * (g + g.T)
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError as exc:
            raise DomainDefinitenessError(f"gamma({t}) not positive-definite") from exc
        return g

    def gamma_many(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.gamma_many_fn is not None:
            gs = np.asarray(self.gamma_many_fn(ts), dtype=float)
        else:
            gs = np.stack([np.asarray(self.gamma(float(t)), dtype=float) for t in ts])
        gs = 0.5 * (gs + np.swapaxes(gs, 1, 2))
        try:
            np.linalg.cholesky(gs)
        except np.linalg.LinAlgError as exc:
            raise DomainDefinitenessError("gamma(t) not positive-definite on sampled t") from exc
        return gs

    def closure_contains(self, t, x):
        return quad_form(self.gamma_at(t), x) <= 1.0

    def open_contains(self, t, x):
        return quad_form(self.gamma_at(t), x) < 1.0

    def boundary_sample(self, t, m, rng):
        return sample_ellipsoid_boundary(self.gamma_at(t), m, rng)

    def bounding_box(self, t):
        return np.sqrt(np.diag(np.linalg.inv(self.gamma_at(t))))


@dataclass
class InitialSet:
    """Closed ellipsoid {x : x'Rx <= 1}."""

    r_matrix: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r_matrix, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise InputError(f"R must be square, got shape {r.shape}")
        if not np.allclose(r, r.T, atol=1e-12):
            raise InputError("R must be symmetric")
        r = 0.5 * (r + r.T)
        try:
            np.linalg.cholesky(r)
        except np.linalg.LinAlgError as exc:
            raise DomainDefinitenessError("R not positive-definite") from exc
        self.r_matrix = r

    @property
    def n(self) -> int:
        return self.r_matrix.shape[0]

    def contains(self, x) -> np.ndarray:
        return quad_form(self.r_matrix, x) <= 1.0

    def boundary_ring(self) -> np.ndarray:
        """2n deterministic points on the boundary: signed axis directions
        of the unit sphere mapped through R^{-1/2}."""
        m = sym_inv_sqrt(self.r_matrix)
        dirs = []
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = 1.0
            dirs.append(e)
            dirs.append(-e)
        return np.array(dirs) @ m

    def bounding_box(self) -> np.ndarray:
        return np.sqrt(np.diag(np.linalg.inv(self.r_matrix)))


@dataclass
class DomainSpec:
    """FTS problem geometry: initial set, trajectory family and horizon."""

    initial: InitialSet
    trajectory: EllipsoidFamily
    t0: float
    horizon: float

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise InputError("horizon must be positive")
        if self.initial.n != self.trajectory.n:
            raise InputError("initial/trajectory dimension mismatch")

    @property
    def n(self) -> int:
        return self.initial.n

    @property
    def t_end(self) -> float:
        return self.t0 + self.horizon

    def in_horizon(self, t: float) -> bool:
        return self.t0 - _T_TOL <= t <= self.t_end + _T_TOL


class WellPosedness(NamedTuple):
    ok: bool
    margin: float


def contains(dom: DomainSpec, t: float, x, which: str) -> bool:
    """Membership in the initial set, open trajectory set, or its closure."""
    x = np.asarray(x, dtype=float)
    if which == "initial":
        return bool(dom.initial.contains(x)[0])
    if which not in ("trajectory", "trajectory_closure"):
        raise InputError(f"unknown membership kind {which!r}")
    if not dom.in_horizon(t):
        raise InputError(f"t = {t} outside [{dom.t0}, {dom.t_end}]")
    q = quad_form(dom.trajectory.gamma_at(t), x)[0]
    return bool(q < 1.0) if which == "trajectory" else bool(q <= 1.0)


def wellposed_check(dom: DomainSpec) -> WellPosedness:
    """R > Gamma(t0) in the definite order; margin is the smallest eigenvalue
    of the difference."""
    diff = dom.initial.r_matrix - dom.trajectory.gamma_at(dom.t0)
    margin = float(np.linalg.eigvalsh(0.5 * (diff + diff.T)).min())
    return WellPosedness(ok=margin > 0.0, margin=margin)


def sample_interior(dom: DomainSpec, n_c: int, rng_seed: int):
    """n_c pairs (t, x), t uniform in J and x uniform in the closed ellipsoid
    at that t (rejection in its bounding box). Returns (ts, xs)."""
    if n_c <= 0:
        raise InputError("n_c must be positive")
    rng = np.random.default_rng(rng_seed)
    ts = rng.uniform(dom.t0, dom.t_end, size=n_c)
    gs = dom.trajectory.gamma_many(ts)
    half = np.sqrt(np.diagonal(np.linalg.inv(gs), axis1=1, axis2=2))
    xs = np.empty((n_c, dom.n))
    pending = np.arange(n_c)
    proposals = 0
    while pending.size:
        cand = rng.uniform(-1.0, 1.0, size=(pending.size, dom.n)) * half[pending]
        ok = quad_form_many(gs[pending], cand) <= 1.0
        xs[pending[ok]] = cand[ok]
        proposals += pending.size
        pending = pending[~ok]
        if proposals > 10_000 and (n_c - pending.size) / proposals < 1e-3:
            raise DegenerateDomainError(
                f"interior rejection acceptance {(n_c - pending.size) / proposals:.2e} < 1e-3"
            )
    return ts, xs


def sample_boundary(dom: DomainSpec, n_t: int, n_b_per_t: int, rng_seed: int):
    """n_t equally spaced instants covering J inclusive; n_b_per_t boundary
    points at each. Returns (ts, xs) with x'G(t)x = 1 to 1e-12."""
    if n_t < 2:
        raise InputError("n_t must be at least 2")
    if n_b_per_t <= 0:
        raise InputError("n_b_per_t must be positive")
    rng = np.random.default_rng(rng_seed)
    instants = np.linspace(dom.t0, dom.t_end, n_t)
    ts, xs = [], []
    for t in instants:
        pts = dom.trajectory.boundary_sample(float(t), n_b_per_t, rng)
        ts.append(np.full(n_b_per_t, t))
        xs.append(pts)
    return np.concatenate(ts), np.vstack(xs)


def sample_initial(dom: DomainSpec, n_0: int, rng_seed: int) -> np.ndarray:
    """n_0 points in the initial set. The first min(n_0, 2n) entries are the
    deterministic boundary ring, so the discrete sup over the set always sees
    the worst shell; the rest are uniform by rejection."""
    if n_0 <= 0:
        raise InputError("n_0 must be positive")
    ring = dom.initial.boundary_ring()
    if n_0 <= ring.shape[0]:
        return ring[:n_0].copy()
    rng = np.random.default_rng(rng_seed)
    bulk = sample_ellipsoid_closure(dom.initial.r_matrix, n_0 - ring.shape[0], rng)
    return np.vstack([ring, bulk])


def sample_at_time(dom: DomainSpec, t: float, m: int, rng_seed: int) -> np.ndarray:
    """m points uniform in the closed trajectory ellipsoid at a fixed t."""
    if not dom.in_horizon(t):
        raise InputError(f"t = {t} outside [{dom.t0}, {dom.t_end}]")
    rng = np.random.default_rng(rng_seed)
    return sample_ellipsoid_closure(dom.trajectory.gamma_at(t), m, rng)


def constant_family(matrix, label="constant") -> EllipsoidFamily:
    g = np.asarray(matrix, dtype=float)
    n = g.shape[0]
    return EllipsoidFamily(
        n=n,
        gamma=lambda t: g,
        label=label,
        gamma_many_fn=lambda ts: np.broadcast_to(g, (len(ts), n, n)).copy(),
    )


def scalar_mu_family(k=0.1, r0=1.0, t0=0.0, scale=0.8, n=2) -> EllipsoidFamily:
    """G(t) = scale * k * mu(t) * I with mu(t) = r0^2 + (1/k - r0^2) e^{2(t-t0)}.

    The radius shrinks like the closed-form envelope of the cubic benchmark
    system, leaving a fixed 1/scale clearance to its trajectories.
    """

    def mu(ts):
        return r0**2 + (1.0 / k - r0**2) * np.exp(2.0 * (ts - t0))

    def gamma_many(ts):
        c = scale * k * mu(np.asarray(ts, dtype=float))
        return c[:, None, None] * np.eye(n)

    return EllipsoidFamily(
        n=n,
        gamma=lambda t: scale * k * float(mu(np.array([t]))[0]) * np.eye(n),
        label="ex2_scalar_mu",
        gamma_many_fn=gamma_many,
    )


def rotating_diag_family(
    d1=2.0 / np.pi**2,
    d2=0.1 / np.pi**2,
    rate1=0.5,
    rate2=2.0,
    omega=0.2 * np.pi,
) -> EllipsoidFamily:
    """2-D family Theta(t) diag(d1 e^{rate1 t}, d2 e^{rate2 t}) Theta(t)',
    Theta a rotation of angle omega*t."""

    def gamma_many(ts):
        ts = np.asarray(ts, dtype=float)
        c, s = np.cos(omega * ts), np.sin(omega * ts)
        e1 = d1 * np.exp(rate1 * ts)
        e2 = d2 * np.exp(rate2 * ts)
        # Theta @ diag(e1, e2) @ Theta', Theta = [[c, s], [-s, c]]
        gs = np.empty((len(ts), 2, 2))
        gs[:, 0, 0] = c * c * e1 + s * s * e2
        gs[:, 0, 1] = c * s * (e2 - e1)
        gs[:, 1, 0] = gs[:, 0, 1]
        gs[:, 1, 1] = s * s * e1 + c * c * e2
        return gs

    def gamma(t):
        return gamma_many(np.array([t]))[0]

    return EllipsoidFamily(n=2, gamma=gamma, label="ex3_rotating_diag", gamma_many_fn=gamma_many)


GAMMA_FAMILIES = {
    "constant": constant_family,
    "ex2_scalar_mu": scalar_mu_family,
    "ex3_rotating_diag": rotating_diag_family,
}


def make_gamma_family(name: str, **params) -> EllipsoidFamily:
    """Instantiate a built-in parametric family by config name."""
    try:
        factory = GAMMA_FAMILIES[name]
    except KeyError:
        raise InputError(
            f"unknown gamma family {name!r}; known: {sorted(GAMMA_FAMILIES)}"
        ) from None
    return factory(**params)
