"""Vector fields, discrete maps, fixed-step RK4 and a Monte-Carlo FTS oracle.

Horizons in this problem class are short (a couple of seconds), so a classic
fixed-step RK4 is used throughout; determinism matters more here than
adaptive error control. Any state component exceeding 1e12 in magnitude is
treated as divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .domains import DomainSpec, quad_form, sample_initial, wellposed_check
from .errors import DivergenceError, InputError

DIVERGENCE_LIMIT = 1e12


@dataclass
class VectorField:
    """Continuous-time right-hand side f(t, x).

    eval maps (t, x) -> dx/dt and must be deterministic. eval_many, when
    provided, evaluates a whole batch (ts, xs) at once; a row-by-row fallback
    is used otherwise. a_matrix is set for linear systems only and feeds the
    LTV cross-checks.
    """

    dim: int
    eval: Callable[[float, np.ndarray], np.ndarray]
    label: str = "custom"
    eval_many: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    a_matrix: Optional[Callable[[float], np.ndarray]] = None

    def batch(self, ts, xs) -> np.ndarray:
        ts = np.broadcast_to(np.asarray(ts, dtype=float), (len(xs),))
        xs = np.asarray(xs, dtype=float)
        if self.eval_many is not None:
            return np.asarray(self.eval_many(ts, xs), dtype=float)
        return np.stack([np.asarray(self.eval(float(t), x), dtype=float) for t, x in zip(ts, xs)])


@dataclass
class DiscreteMap:
    """Discrete-time system x(k+1) = step(k, x(k)), with optional inverse."""

    dim: int
    step: Callable[[int, np.ndarray], np.ndarray]
    inverse: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    label: str = "custom"

    def batch(self, k: int, xs: np.ndarray) -> np.ndarray:
        return np.stack([np.asarray(self.step(k, x), dtype=float) for x in xs])


@dataclass
class Trajectory:
    """Sampled solution: strictly increasing times, one state row each."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.ndim != 1 or self.states.shape[0] != self.times.shape[0]:
            raise InputError("times/states length mismatch")
        if np.any(np.diff(self.times) <= 0.0):
            raise InputError("times must be strictly increasing")


def eval_field(sys: VectorField, t: float, x) -> np.ndarray:
    """f(t, x) with dimension checking."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.dim,):
        raise InputError(f"state shape {x.shape} != ({sys.dim},)")
    if not np.isfinite(t):
        raise InputError(f"t = {t} is not finite")
    out = np.asarray(sys.eval(float(t), x), dtype=float)
    if out.shape != (sys.dim,):
        raise InputError(f"field returned shape {out.shape}, expected ({sys.dim},)")
    return out


def _time_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    if t1 <= t0:
        raise InputError("t1 must exceed t0")
    if dt <= 0.0:
        raise InputError("dt must be positive")
    n_full = int(np.floor((t1 - t0) / dt + 1e-9))
    times = t0 + dt * np.arange(n_full + 1)
    if times[-1] < t1 - 1e-9 * max(1.0, abs(t1)):
        times = np.append(times, t1)
    else:
        times[-1] = t1  # absorb roundoff so the grid lands exactly on t1
    return times


def _rk4_increment(sys: VectorField, t: float, xs: np.ndarray, dt: float) -> np.ndarray:
    k1 = sys.batch(t, xs)
    k2 = sys.batch(t + 0.5 * dt, xs + 0.5 * dt * k1)
    k3 = sys.batch(t + 0.5 * dt, xs + 0.5 * dt * k2)
    k4 = sys.batch(t + dt, xs + dt * k3)
    return (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_rk4(sys: VectorField, t0: float, x0, t1: float, dt: float) -> Trajectory:
    """Classical 4th-order Runge-Kutta on a fixed grid; the last step is
    truncated to land exactly on t1. Raises DivergenceError on blow-up."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.dim,):
        raise InputError(f"x0 shape {x0.shape} != ({sys.dim},)")
    times = _time_grid(t0, t1, dt)
    states = np.empty((len(times), sys.dim))
    states[0] = x0
    x = x0[None, :]
    for i in range(len(times) - 1):
        x = x + _rk4_increment(sys, times[i], x, times[i + 1] - times[i])
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_LIMIT):
            raise DivergenceError(times[i + 1], x[0].copy())
        states[i + 1] = x[0]
    return Trajectory(times, states)


@dataclass
class Counterexample:
    index: int
    x0: np.ndarray
    exit_time: float
    diverged: bool = False


@dataclass
class OracleReport:
    """Monte-Carlo FTS verdict over sampled initial states."""

    passed: bool
    n_samples: int
    n_violations: int
    n_divergent: int
    first_violation: Optional[Counterexample]
    dt: float
    rng_seed: int

    def to_dict(self) -> dict:
        d = {
            "passed": self.passed,
            "n_samples": self.n_samples,
            "n_violations": self.n_violations,
            "n_divergent": self.n_divergent,
            "dt": self.dt,
            "rng_seed": self.rng_seed,
            "first_violation": None,
        }
        if self.first_violation is not None:
            d["first_violation"] = {
                "index": self.first_violation.index,
                "x0": self.first_violation.x0.tolist(),
                "exit_time": self.first_violation.exit_time,
                "diverged": self.first_violation.diverged,
            }
        return d


def mc_fts_check(
    sys: VectorField, dom: DomainSpec, n_samples: int, dt: float, rng_seed: int
) -> OracleReport:
    """Empirical FTS test: integrate trajectories from initial samples and
    flag the first grid time at which one leaves the open trajectory set.

    The sample set always contains the deterministic ring on the initial-set
    boundary (worst cases live there). The counterexample reported is the one
    with the smallest sample index, which keeps the report independent of any
    evaluation-order parallelism.
    """
    wp = wellposed_check(dom)
    if not wp.ok:
        raise InputError(f"domain not well-posed (margin {wp.margin:g})")
    if sys.dim != dom.n:
        raise InputError("system/domain dimension mismatch")
    x0s = sample_initial(dom, n_samples, rng_seed)
    times = _time_grid(dom.t0, dom.t_end, dt)
    gammas = dom.trajectory.gamma_many(times)

    exit_times = np.full(n_samples, np.inf)
    diverged = np.zeros(n_samples, dtype=bool)
    alive = np.ones(n_samples, dtype=bool)
    xs = x0s.copy()

    def mark_exits(step_idx):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            return
        q = quad_form(gammas[step_idx], xs[idx])
        out = q >= 1.0
        if np.any(out):
            exit_times[idx[out]] = times[step_idx]
            alive[idx[out]] = False

    mark_exits(0)
    for i in range(len(times) - 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        step = _rk4_increment(sys, times[i], xs[idx], times[i + 1] - times[i])
        new = xs[idx] + step
        bad = ~np.all(np.isfinite(new), axis=1) | np.any(np.abs(new) > DIVERGENCE_LIMIT, axis=1)
        if np.any(bad):
            exit_times[idx[bad]] = times[i + 1]
            diverged[idx[bad]] = True
            alive[idx[bad]] = False
            new = new[~bad]
            idx = idx[~bad]
        xs[idx] = new
        mark_exits(i + 1)

    violated = np.isfinite(exit_times)
    n_viol = int(violated.sum())
    first = None
    if n_viol:
        j = int(np.flatnonzero(violated)[0])
        first = Counterexample(
            index=j, x0=x0s[j].copy(), exit_time=float(exit_times[j]), diverged=bool(diverged[j])
        )
    return OracleReport(
        passed=n_viol == 0,
        n_samples=n_samples,
        n_violations=n_viol,
        n_divergent=int(diverged.sum()),
        first_violation=first,
        dt=dt,
        rng_seed=rng_seed,
    )


def _ex1_lti(rate: float = 0.1) -> VectorField:
    a = -rate * np.eye(2)
    return VectorField(
        dim=2,
        eval=lambda t, x: a @ x,
        label="ex1_lti",
        eval_many=lambda ts, xs: xs @ a.T,
        a_matrix=lambda t: a,
    )


def _ex2_lakshmikantham(k: float = 0.1) -> VectorField:
    def f(t, x):
        r2 = x[0] ** 2 + x[1] ** 2
        return np.array(
            [
                -x[0] - x[1] + k * (x[0] - x[1]) * r2,
                x[0] - x[1] + k * (x[0] + x[1]) * r2,
            ]
        )

    def f_many(ts, xs):
        r2 = xs[:, 0] ** 2 + xs[:, 1] ** 2
        return np.column_stack(
            [
                -xs[:, 0] - xs[:, 1] + k * (xs[:, 0] - xs[:, 1]) * r2,
                xs[:, 0] - xs[:, 1] + k * (xs[:, 0] + xs[:, 1]) * r2,
            ]
        )

    return VectorField(dim=2, eval=f, label="ex2_lakshmikantham", eval_many=f_many)


def _ex3_pendulum(g: float = 9.81, m: float = 0.15, l: float = 0.15, b: float = 0.1) -> VectorField:
    c1 = g / l
    c2 = b / (m * l * l)

    def f(t, x):
        return np.array([x[1], -c1 * np.sin(x[0]) - c2 * x[1]])

    def f_many(ts, xs):
        return np.column_stack([xs[:, 1], -c1 * np.sin(xs[:, 0]) - c2 * xs[:, 1]])

    return VectorField(dim=2, eval=f, label="ex3_pendulum", eval_many=f_many)


def _neg_scalar_exp() -> VectorField:
    return VectorField(
        dim=1,
        eval=lambda t, x: x.copy(),
        label="neg_scalar_exp",
        eval_many=lambda ts, xs: xs.copy(),
        a_matrix=lambda t: np.eye(1),
    )


SYSTEMS = {
    "ex1_lti": _ex1_lti,
    "ex2_lakshmikantham": _ex2_lakshmikantham,
    "ex3_pendulum": _ex3_pendulum,
    "neg_scalar_exp": _neg_scalar_exp,
}


def make_system(label: str, **params) -> VectorField:
    """Instantiate a built-in benchmark system by label."""
    try:
        factory = SYSTEMS[label]
    except KeyError:
        raise InputError(f"unknown system {label!r}; known: {sorted(SYSTEMS)}") from None
    return factory(**params)
