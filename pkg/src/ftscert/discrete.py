"""Sampled verifier for the discrete-time certificate conditions.

The forward escape set at step k is approximated two ways at once: images of
interior samples of the closed domain that land outside the next open domain
(tag "escaped"), plus images of boundary samples standing in for the image of
the domain boundary (tag "boundary_image"). The surrogate is exact only for
injective continuous step maps, which matches the hypothesis under which the
conditions are necessary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import (
    InitialSet,
    quad_form,
    sample_ellipsoid_boundary,
    sample_ellipsoid_closure,
)
from .dynamics import DiscreteMap
from .errors import DomainDefinitenessError, InputError
from .network import LyapunovNet, value_fn


@dataclass
class DiscreteDomainSeq:
    """Initial set plus one trajectory-ellipsoid snapshot per step k = 0..N."""

    omega0: InitialSet
    gammas: list[np.ndarray]
    n_steps: int

    def __post_init__(self):
        if len(self.gammas) != self.n_steps + 1:
            raise InputError(f"need {self.n_steps + 1} snapshots, got {len(self.gammas)}")
        gs = []
        for k, g in enumerate(self.gammas):
            g = np.asarray(g, dtype=float)
            g = 0.5 * (g + g.T)
            try:
                np.linalg.cholesky(g)
            except np.linalg.LinAlgError as exc:
                raise DomainDefinitenessError(f"snapshot {k} not positive-definite") from exc
            gs.append(g)
        self.gammas = gs
        diff = self.omega0.r_matrix - self.gammas[0]
        if np.linalg.eigvalsh(0.5 * (diff + diff.T)).min() <= 0.0:
            raise InputError("initial set must sit strictly inside the k = 0 snapshot")

    @property
    def n(self) -> int:
        return self.omega0.n


@dataclass
class ForwardSet:
    """Sampled escape set at one step, with provenance and preimages."""

    points: np.ndarray
    tags: list[str]
    preimages: np.ndarray


def forward_set_sample(
    dmap: DiscreteMap, seq: DiscreteDomainSeq, k: int, m: int, rng_seed: int
) -> ForwardSet:
    """Sample the forward escape set at step k: (a) images of m interior
    samples that exit the open k+1 domain, (b) images of m boundary samples."""
    if not 0 <= k < seq.n_steps:
        raise InputError(f"k = {k} outside 0..{seq.n_steps - 1}")
    rng = np.random.default_rng(rng_seed)
    inner = sample_ellipsoid_closure(seq.gammas[k], m, rng)
    img = dmap.batch(k, inner)
    escaped = quad_form(seq.gammas[k + 1], img) >= 1.0
    bnd = sample_ellipsoid_boundary(seq.gammas[k], m, rng)
    bnd_img = dmap.batch(k, bnd)
    points = np.vstack([img[escaped], bnd_img])
    tags = ["escaped"] * int(escaped.sum()) + ["boundary_image"] * m
    preimages = np.vstack([inner[escaped], bnd])
    return ForwardSet(points=points, tags=tags, preimages=preimages)


@dataclass
class DtVerdict:
    """Outcome of the sampled discrete-time conditions."""

    passed: bool
    decrease_ok: bool
    gap_ok: bool
    decrease_violations: int
    worst_decrease: float  # max dV over all sampled (k, x); must be <= 0
    max_initial: float
    min_forward: float
    violations: list  # (k, x, dV) triples for the decrease condition
    samples_per_step: list  # the per-step interior samples, for audit

    @property
    def gap(self) -> float:
        return self.min_forward - self.max_initial

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "decrease_ok": self.decrease_ok,
            "gap_ok": self.gap_ok,
            "decrease_violations": self.decrease_violations,
            "worst_decrease": self.worst_decrease,
            "max_initial": self.max_initial,
            "min_forward": self.min_forward,
            "gap": self.gap,
        }


def check_dt_conditions(
    v, dmap: DiscreteMap, seq: DiscreteDomainSeq, m: int, rng_seed: int
) -> DtVerdict:
    """Check dV(k, x) = V(k+1, f(k, x)) - V(k, x) <= 0 on m samples per step
    and the strict gap between the initial-set sup of V(0, .) and the min of
    V(k+1, .) over the sampled forward escape sets.

    v may be a function (k, x) -> scalar or a trained LyapunovNet evaluated
    at integer times.
    """
    if isinstance(v, LyapunovNet):
        vf = value_fn(v)
    else:
        vf = value_fn(lambda t, x: v(int(round(t)), x))
    rng = np.random.default_rng(rng_seed)

    worst = -np.inf
    n_viol = 0
    violations = []
    samples = []
    for k in range(seq.n_steps):
        xs = sample_ellipsoid_closure(seq.gammas[k], m, rng)
        samples.append(xs)
        dv = vf(k + 1, dmap.batch(k, xs)) - vf(k, xs)
        worst = max(worst, float(dv.max()))
        bad = dv > 0.0
        n_viol += int(bad.sum())
        for x, d in zip(xs[bad], dv[bad]):
            violations.append((k, x, float(d)))

    init = np.vstack(
        [seq.omega0.boundary_ring(), sample_ellipsoid_closure(seq.omega0.r_matrix, m, rng)]
    )
    max_init = float(vf(0, init).max())
    min_fwd = np.inf
    for k in range(seq.n_steps):
        fwd = forward_set_sample(dmap, seq, k, m, rng_seed + 1000 + k)
        if len(fwd.points):
            min_fwd = min(min_fwd, float(vf(k + 1, fwd.points).min()))

    decrease_ok = n_viol == 0
    gap_ok = max_init < min_fwd
    return DtVerdict(
        passed=decrease_ok and gap_ok,
        decrease_ok=decrease_ok,
        gap_ok=gap_ok,
        decrease_violations=n_viol,
        worst_decrease=worst,
        max_initial=max_init,
        min_forward=float(min_fwd),
        violations=violations,
        samples_per_step=samples,
    )
