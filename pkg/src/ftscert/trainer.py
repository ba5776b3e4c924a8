"""Adam-driven training of the certificate network and its verification.

The loop follows the staged workflow: sample collocation points once, then
per epoch shuffle the interior set into mini-batches, take one Adam step per
batch (boundary and initial sets enter every step in full), and after each
epoch test the raw certificate conditions on the whole collocation set.
Training stops at the first epoch with zero violations, after which the
conditions are re-checked on a held-out space-time grid with fresh boundary
samples. Only terminated + test pass counts as certified.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import network
from .domains import DomainSpec, quad_form, wellposed_check
from .dynamics import VectorField
from .errors import InputError, TrainingAbortedError
from .loss import CollocationSet, CollocationSizes, LossConfig, build_collocation, field_directions
from .network import LossContext, LyapunovNet, init_net


@dataclass
class Seeds:
    net: int = 0
    sampler: int = 1
    shuffle: int = 2


@dataclass
class TestGridConfig:
    """Held-out verification set: a regular spatial grid per time slice,
    restricted to the trajectory ellipsoid, plus fresh boundary samples."""

    n_slices: int = 21
    density: int = 50
    boundary_per_slice: int = 200
    seed: int | None = None  # derived from the sampler seed when None


@dataclass
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    sizes: CollocationSizes = field(default_factory=lambda: CollocationSizes(5000, 500, 11, 200))
    hidden: list[int] = field(default_factory=lambda: [128])
    n_minibatches: int = 100
    lr0: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float = 0.0
    max_epochs: int = 500
    seeds: Seeds = field(default_factory=Seeds)
    test: TestGridConfig = field(default_factory=TestGridConfig)
    augment_retry: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise InputError("max_epochs must be at least 1")
        if self.n_minibatches < 1:
            raise InputError("n_minibatches must be at least 1")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]

    @staticmethod
    def zeros_like(params) -> "AdamState":
        return AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, iteration: int, cfg) -> tuple[list, AdamState]:
    """One Adam update with bias correction; the effective learning rate is
    lr0 / (1 + lr_decay * iteration), iteration counted from 0."""
    t = iteration + 1
    lr = cfg.lr0 / (1.0 + cfg.lr_decay * iteration)
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    new_params, ms, vs = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        new_params.append(p - lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps))
        ms.append(m)
        vs.append(v)
    return new_params, AdamState(ms, vs)


@dataclass
class TerminationDetail:
    """Raw certificate conditions at collocation resolution: Vdot <= 0 on the
    interior set and sup0 - V < 0 at every boundary point (no margins)."""

    terminated: bool
    interior_violations: int
    boundary_violations: int
    sup0: float
    max_vdot: float
    min_boundary_gap: float  # min over boundary of V - sup0; must be > 0

    def to_dict(self) -> dict:
        return {
            "terminated": self.terminated,
            "interior_violations": self.interior_violations,
            "boundary_violations": self.boundary_violations,
            "sup0": self.sup0,
            "max_vdot": self.max_vdot,
            "min_boundary_gap": self.min_boundary_gap,
        }


def _evaluate_full(net, colloc: CollocationSet, dirs: np.ndarray, cfg: LossConfig):
    """Full-set losses and raw-condition violation counts in one pass."""
    vdot = network.vdot_batch(net, colloc.interior_u(), dirs)
    v0 = network.forward_batch(net, colloc.initial_u())
    vb = network.forward_batch(net, colloc.boundary_u())
    sup0 = float(v0.max())
    l1 = float(np.mean(np.maximum(vdot + cfg.delta1, 0.0) ** 2))
    l2 = float(np.mean(np.maximum(sup0 - vb + cfg.delta2, 0.0) ** 2))
    detail = TerminationDetail(
        terminated=bool(np.all(vdot <= 0.0) and np.all(vb > sup0)),
        interior_violations=int(np.sum(vdot > 0.0)),
        boundary_violations=int(np.sum(vb <= sup0)),
        sup0=sup0,
        max_vdot=float(vdot.max()),
        min_boundary_gap=float((vb - sup0).min()),
    )
    return detail, l1, l2


def check_termination(
    net: LyapunovNet, sys: VectorField, colloc: CollocationSet, dirs: np.ndarray | None = None
) -> TerminationDetail:
    """Evaluate the stopping rule on the full collocation set."""
    if dirs is None:
        dirs = field_directions(sys, colloc.interior_t, colloc.interior_x)
    detail, _, _ = _evaluate_full(net, colloc, dirs, LossConfig())
    return detail


@dataclass
class TestVerdict:
    """Held-out re-check of the raw conditions; keeps every violating point."""

    passed: bool
    sup0: float
    n_interior: int
    n_boundary: int
    n_initial: int
    interior_violations: np.ndarray  # rows [t, x..., vdot]
    boundary_violations: np.ndarray  # rows [t, x..., v]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "sup0": self.sup0,
            "n_interior": self.n_interior,
            "n_boundary": self.n_boundary,
            "n_initial": self.n_initial,
            "n_interior_violations": len(self.interior_violations),
            "n_boundary_violations": len(self.boundary_violations),
            "interior_violations": self.interior_violations.tolist(),
            "boundary_violations": self.boundary_violations.tolist(),
        }


def _grid_in_ellipsoid(g: np.ndarray, density: int, rng: np.random.Generator) -> np.ndarray:
    """Regular grid over the bounding box, restricted to the closure. For
    three or more dimensions a product grid is unaffordable and a uniform
    draw of density^2 points stands in."""
    n = g.shape[0]
    half = np.sqrt(np.diag(np.linalg.inv(g)))
    if n == 1:
        cand = np.linspace(-half[0], half[0], density)[:, None]
    elif n == 2:
        a = np.linspace(-half[0], half[0], density)
        b = np.linspace(-half[1], half[1], density)
        aa, bb = np.meshgrid(a, b, indexing="ij")
        cand = np.column_stack([aa.ravel(), bb.ravel()])
    else:
        cand = rng.uniform(-1.0, 1.0, size=(density * density, n)) * half
    return cand[quad_form(g, cand) <= 1.0]


def verify_on_test_set(
    net: LyapunovNet, sys: VectorField, dom: DomainSpec, tcfg: TestGridConfig, seed: int = 0
) -> TestVerdict:
    """Re-evaluate the raw certificate conditions on points disjoint from the
    training collocation set."""
    test_seed = tcfg.seed if tcfg.seed is not None else seed
    rng = np.random.default_rng(test_seed)
    slices = np.linspace(dom.t0, dom.t_end, tcfg.n_slices)

    int_ts, int_xs = [], []
    bnd_ts, bnd_xs = [], []
    for t in slices:
        g = dom.trajectory.gamma_at(float(t))
        pts = _grid_in_ellipsoid(g, tcfg.density, rng)
        int_ts.append(np.full(len(pts), t))
        int_xs.append(pts)
        bpts = dom.trajectory.boundary_sample(float(t), tcfg.boundary_per_slice, rng)
        bnd_ts.append(np.full(len(bpts), t))
        bnd_xs.append(bpts)
    int_t = np.concatenate(int_ts)
    int_x = np.vstack(int_xs)
    bnd_t = np.concatenate(bnd_ts)
    bnd_x = np.vstack(bnd_xs)

    # initial-set test points: grid restricted to the R-ellipsoid plus the ring
    grid0 = _grid_in_ellipsoid(dom.initial.r_matrix, tcfg.density, rng)
    init_x = np.vstack([dom.initial.boundary_ring(), grid0])
    init_u = np.column_stack([np.full(len(init_x), dom.t0), init_x])
    sup0 = float(network.forward_batch(net, init_u).max())

    u_int = np.column_stack([int_t, int_x])
    vdot = network.vdot_batch(net, u_int, field_directions(sys, int_t, int_x))
    bad_int = vdot > 0.0

    u_bnd = np.column_stack([bnd_t, bnd_x])
    vb = network.forward_batch(net, u_bnd)
    bad_bnd = vb <= sup0

    return TestVerdict(
        passed=not (bad_int.any() or bad_bnd.any()),
        sup0=sup0,
        n_interior=len(int_t),
        n_boundary=len(bnd_t),
        n_initial=len(init_x),
        interior_violations=np.column_stack([u_int[bad_int], vdot[bad_int]]),
        boundary_violations=np.column_stack([u_bnd[bad_bnd], vb[bad_bnd]]),
    )


@dataclass
class EpochRecord:
    epoch: int
    total: float
    l1: float
    l2: float
    interior_violations: int
    boundary_violations: int


@dataclass
class TrainReport:
    terminated: bool
    epochs_run: int
    loss_curve: list[EpochRecord]
    termination: TerminationDetail
    test_verdict: TestVerdict
    wall_clock: float
    seeds: Seeds
    augment_rounds: int = 0

    @property
    def certified(self) -> bool:
        return self.terminated and self.test_verdict.passed

    def to_dict(self) -> dict:
        return {
            "terminated": self.terminated,
            "certified": self.certified,
            "epochs_run": self.epochs_run,
            "augment_rounds": self.augment_rounds,
            "wall_clock": self.wall_clock,
            "seeds": {"net": self.seeds.net, "sampler": self.seeds.sampler, "shuffle": self.seeds.shuffle},
            "termination": self.termination.to_dict(),
            "test_verdict": self.test_verdict.to_dict(),
            "loss_curve": [
                {
                    "epoch": r.epoch,
                    "total": r.total,
                    "l1": r.l1,
                    "l2": r.l2,
                    "interior_violations": r.interior_violations,
                    "boundary_violations": r.boundary_violations,
                }
                for r in self.loss_curve
            ],
        }


def _batch_slices(n: int, n_batches: int):
    """Contiguous chunks of ceil(n / n_batches); the last may be smaller."""
    size = -(-n // n_batches)
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def _run_epochs(net, sys, dom, cfg, colloc, dirs, state, shuffle_rng, curve, k_start, epoch_start):
    """Epoch loop over a fixed collocation set; stops on termination."""
    k = k_start
    epoch = epoch_start
    boundary_u = colloc.boundary_u()
    initial_u = colloc.initial_u()
    interior_u = colloc.interior_u()
    detail = None
    for _ in range(cfg.max_epochs):
        epoch += 1
        perm = shuffle_rng.permutation(colloc.n_interior)
        for sl in _batch_slices(colloc.n_interior, cfg.n_minibatches):
            idx = perm[sl]
            ctx = LossContext(
                interior_u=interior_u[idx],
                interior_dir=dirs[idx],
                boundary_u=boundary_u,
                initial_u=initial_u,
                alpha1=cfg.loss.alpha1,
                alpha2=cfg.loss.alpha2,
                delta1=cfg.loss.delta1,
                delta2=cfg.loss.delta2,
            )
            lv, grad = network.loss_param_gradient(net, ctx)
            if not np.isfinite(lv.total):
                raise TrainingAbortedError(
                    f"non-finite loss {lv.total} at epoch {epoch}, iteration {k}"
                )
            params, state = adam_step(net.params(), grad.params(), state, k, cfg)
            net.set_params(params)
            k += 1
        detail, l1, l2 = _evaluate_full(net, colloc, dirs, cfg.loss)
        curve.append(
            EpochRecord(
                epoch=epoch,
                total=cfg.loss.alpha1 * l1 + cfg.loss.alpha2 * l2,
                l1=l1,
                l2=l2,
                interior_violations=detail.interior_violations,
                boundary_violations=detail.boundary_violations,
            )
        )
        if detail.terminated:
            break
    return detail, state, k, epoch


def train(sys: VectorField, dom: DomainSpec, cfg: TrainConfig) -> tuple[LyapunovNet, TrainReport]:
    """Full workflow: sample, train until the stopping rule fires or the
    epoch budget runs out, then verify on the held-out grid. On test failure
    with augment_retry > 0, failing test points join the collocation set and
    training resumes."""
    t_start = time.perf_counter()
    wp = wellposed_check(dom)
    if not wp.ok:
        raise InputError(f"domain not well-posed (margin {wp.margin:g})")
    if sys.dim != dom.n:
        raise InputError("system/domain dimension mismatch")

    net = init_net([dom.n + 1] + list(cfg.hidden) + [1], cfg.seeds.net)
    colloc = build_collocation(dom, cfg.sizes, cfg.seeds.sampler)
    dirs = field_directions(sys, colloc.interior_t, colloc.interior_x)
    shuffle_rng = np.random.default_rng(cfg.seeds.shuffle)
    state = AdamState.zeros_like(net.params())
    curve: list[EpochRecord] = []

    detail, state, k, epoch = _run_epochs(
        net, sys, dom, cfg, colloc, dirs, state, shuffle_rng, curve, 0, 0
    )
    verdict = verify_on_test_set(net, sys, dom, cfg.test, seed=cfg.seeds.sampler + 7919)

    rounds = 0
    while detail.terminated and not verdict.passed and rounds < cfg.augment_retry:
        rounds += 1
        n = dom.n
        if len(verdict.interior_violations):
            vi = verdict.interior_violations
            colloc.interior_t = np.concatenate([colloc.interior_t, vi[:, 0]])
            colloc.interior_x = np.vstack([colloc.interior_x, vi[:, 1 : 1 + n]])
            dirs = np.vstack(
                [dirs, field_directions(sys, vi[:, 0], vi[:, 1 : 1 + n])]
            )
        if len(verdict.boundary_violations):
            vb = verdict.boundary_violations
            colloc.boundary_t = np.concatenate([colloc.boundary_t, vb[:, 0]])
            colloc.boundary_x = np.vstack([colloc.boundary_x, vb[:, 1 : 1 + n]])
        state = AdamState.zeros_like(net.params())
        detail, state, k, epoch = _run_epochs(
            net, sys, dom, cfg, colloc, dirs, state, shuffle_rng, curve, k, epoch
        )
        verdict = verify_on_test_set(net, sys, dom, cfg.test, seed=cfg.seeds.sampler + 7919)

    report = TrainReport(
        terminated=detail.terminated,
        epochs_run=epoch,
        loss_curve=curve,
        termination=detail,
        test_verdict=verdict,
        wall_clock=time.perf_counter() - t_start,
        seeds=cfg.seeds,
        augment_rounds=rounds,
    )
    return net, report
