"""Sampled certificate losses over collocation points.

Both terms are hinge-square penalties: the interior term pushes the orbital
derivative below -delta1, the boundary term pushes boundary values of V above
the discrete initial-set supremum by at least delta2. The mini-batch interior
term normalizes by the batch size so gradient magnitudes do not depend on how
the interior set is split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network
from .domains import DomainSpec, sample_boundary, sample_initial, sample_interior
from .errors import InputError


@dataclass
class LossConfig:
    """Weights and margins of the total loss alpha1*L1 + alpha2*L2."""

    alpha1: float = 1.0
    alpha2: float = 1.0
    delta1: float = 0.0
    delta2: float = 0.1

    def __post_init__(self):
        if self.alpha1 <= 0.0 or self.alpha2 <= 0.0:
            raise InputError("loss weights must be positive")
        if self.delta1 < 0.0:
            raise InputError("delta1 must be nonnegative")
        if self.delta2 <= 0.0:
            raise InputError("delta2 must be positive")


@dataclass
class CollocationSizes:
    n_c: int
    n_b: int
    n_t: int
    n_0: int


@dataclass
class CollocationSet:
    """Interior, boundary and initial-set sample points with timestamps."""

    interior_t: np.ndarray
    interior_x: np.ndarray
    boundary_t: np.ndarray
    boundary_x: np.ndarray
    initial_x: np.ndarray
    t0: float

    @property
    def n_interior(self) -> int:
        return len(self.interior_t)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_t)

    @property
    def n_initial(self) -> int:
        return len(self.initial_x)

    def interior_u(self) -> np.ndarray:
        return np.column_stack([self.interior_t, self.interior_x])

    def boundary_u(self) -> np.ndarray:
        return np.column_stack([self.boundary_t, self.boundary_x])

    def initial_u(self) -> np.ndarray:
        return np.column_stack([np.full(len(self.initial_x), self.t0), self.initial_x])


def build_collocation(dom: DomainSpec, sizes: CollocationSizes, sampler_seed: int) -> CollocationSet:
    """Sample all three families with seeds derived from one sampler seed."""
    it, ix = sample_interior(dom, sizes.n_c, sampler_seed)
    bt, bx = sample_boundary(dom, sizes.n_t, sizes.n_b, sampler_seed + 1)
    x0 = sample_initial(dom, sizes.n_0, sampler_seed + 2)
    return CollocationSet(
        interior_t=it, interior_x=ix, boundary_t=bt, boundary_x=bx, initial_x=x0, t0=dom.t0
    )


def field_directions(sys, ts, xs) -> np.ndarray:
    """Rows [1, f(t_i, x_i)]: the input-space direction of the orbital
    derivative at each collocation point."""
    f = sys.batch(ts, xs)
    return np.column_stack([np.ones(len(f)), f])


def l1_hat(net, sys, ts, xs, delta1: float) -> float:
    """Mean of (max{Vdot + delta1, 0})^2 over the given interior subset."""
    ts = np.asarray(ts, dtype=float)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if len(ts) == 0:
        raise InputError("empty interior subset")
    u = np.column_stack([ts, xs])
    vdot = network.vdot_batch(net, u, field_directions(sys, ts, xs))
    return float(np.mean(np.maximum(vdot + delta1, 0.0) ** 2))


def sup_initial(net, t0: float, xs0) -> float:
    """Discrete supremum of V(t0, .) over the initial-set samples."""
    xs0 = np.atleast_2d(np.asarray(xs0, dtype=float))
    if len(xs0) == 0:
        raise InputError("empty initial set")
    return float(np.max(network.value_fn(net)(t0, xs0)))


def l2_hat(net, ts, xs, sup0: float, delta2: float) -> float:
    """Mean of (max{sup0 - V + delta2, 0})^2 over the boundary points."""
    ts = np.asarray(ts, dtype=float)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if len(ts) == 0:
        raise InputError("empty boundary set")
    v = network.value_fn(net)(ts, xs)
    return float(np.mean(np.maximum(sup0 - v + delta2, 0.0) ** 2))


def total_loss(l1: float, l2: float, cfg: LossConfig) -> float:
    if l1 < 0.0 or l2 < 0.0:
        raise InputError("loss terms must be nonnegative")
    return cfg.alpha1 * l1 + cfg.alpha2 * l2


def make_context(
    net, sys, cfg: LossConfig, colloc: CollocationSet, batch_idx=None
) -> network.LossContext:
    """Assemble the loss-evaluation context for one training step: interior
    mini-batch plus the full boundary and initial sets."""
    if batch_idx is None:
        ts, xs = colloc.interior_t, colloc.interior_x
    else:
        ts, xs = colloc.interior_t[batch_idx], colloc.interior_x[batch_idx]
    u = np.column_stack([ts, xs])
    return network.LossContext(
        interior_u=u,
        interior_dir=field_directions(sys, ts, xs),
        boundary_u=colloc.boundary_u(),
        initial_u=colloc.initial_u(),
        alpha1=cfg.alpha1,
        alpha2=cfg.alpha2,
        delta1=cfg.delta1,
        delta2=cfg.delta2,
    )
