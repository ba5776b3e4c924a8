"""Command implementations behind the CLI: train, verify, oracle, exports.

Every artifact is written atomically (temp file in the target directory,
then rename). Existing outputs are only replaced under force=True. Exit
codes follow one contract everywhere: 0 certified/pass, 2 not certified,
1 error (raised to the CLI layer).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from . import network
from .config import build_domain, build_system, build_train_config
from .discrete import DiscreteDomainSeq, check_dt_conditions
from .domains import InitialSet, quad_form, sample_at_time
from .dynamics import DiscreteMap, mc_fts_check
from .errors import InputError
from .loss import build_collocation
from .ltv_baseline import check_dlmi, quadratic_fit, scale_lyapunov, scaling_interval, state_transition_q
from .trainer import check_termination, train, verify_on_test_set


def atomic_write(path: Path, text: str, force: bool) -> None:
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _loss_curve_csv(report) -> str:
    lines = ["epoch,loss,l1,l2,interior_violations,boundary_violations"]
    for r in report.loss_curve:
        lines.append(
            f"{r.epoch},{r.total!r},{r.l1!r},{r.l2!r},"
            f"{r.interior_violations},{r.boundary_violations}"
        )
    return "\n".join(lines) + "\n"


def run_training(cfg: dict, outdir, force: bool = False) -> int:
    """Train from a validated config; write checkpoint, report and loss
    curve; 0 iff certified."""
    outdir = Path(outdir)
    sys_ = build_system(cfg)
    dom = build_domain(cfg)
    tcfg = build_train_config(cfg)
    net, report = train(sys_, dom, tcfg)

    digest = network.config_digest(cfg)
    ckpt = outdir / "checkpoint.json"
    if ckpt.exists() and not force:
        raise FileExistsError(f"{ckpt} exists; pass --force to overwrite")
    outdir.mkdir(parents=True, exist_ok=True)
    tmp = ckpt.with_name(ckpt.name + ".tmp")
    network.save_checkpoint(net, tmp, rng_seed=tcfg.seeds.net, digest=digest)
    os.replace(tmp, ckpt)
    atomic_write(outdir / "train_report.json", _json_text(report.to_dict()), force)
    atomic_write(outdir / "loss_curve.csv", _loss_curve_csv(report), force)

    status = "certified" if report.certified else "not certified"
    print(
        f"{status}: terminated={report.terminated} after {report.epochs_run} epochs, "
        f"test_pass={report.test_verdict.passed}, wall={report.wall_clock:.1f}s"
    )
    return 0 if report.certified else 2


def run_verify(checkpoint_path, cfg: dict) -> int:
    """Re-check the stored network against the config's collocation set and
    the held-out grid; no training."""
    net = network.load_checkpoint(checkpoint_path)
    sys_ = build_system(cfg)
    dom = build_domain(cfg)
    tcfg = build_train_config(cfg)
    if net.state_dim != dom.n:
        raise InputError(
            f"checkpoint state dim {net.state_dim} != domain dim {dom.n}"
        )
    colloc = build_collocation(dom, tcfg.sizes, tcfg.seeds.sampler)
    detail = check_termination(net, sys_, colloc)
    verdict = verify_on_test_set(net, sys_, dom, tcfg.test, seed=tcfg.seeds.sampler + 7919)
    certified = detail.terminated and verdict.passed
    print(
        f"{'certified' if certified else 'not certified'}: "
        f"collocation violations interior={detail.interior_violations} "
        f"boundary={detail.boundary_violations}, test_pass={verdict.passed}"
    )
    return 0 if certified else 2


def run_oracle(cfg: dict, outdir, force: bool = False, samples=None, dt=None, seed=None) -> int:
    """Monte-Carlo trajectory check; 0 iff no violation was found."""
    sys_ = build_system(cfg)
    dom = build_domain(cfg)
    oc = cfg["oracle"]
    rep = mc_fts_check(
        sys_,
        dom,
        n_samples=samples if samples is not None else oc["samples"],
        dt=dt if dt is not None else float(oc["dt"]),
        rng_seed=seed if seed is not None else oc["seed"],
    )
    atomic_write(Path(outdir) / "oracle_report.json", _json_text(rep.to_dict()), force)
    if rep.passed:
        print(f"oracle pass: {rep.n_samples} trajectories stayed inside")
    else:
        fv = rep.first_violation
        print(
            f"oracle fail: {rep.n_violations} violations; first x0={fv.x0.tolist()} "
            f"exits at t={fv.exit_time:g}"
        )
    return 0 if rep.passed else 2


def run_reproduce(cfg: dict, outdir, force: bool = False) -> int:
    """Training pipeline plus the trajectory oracle, as one command."""
    code = run_training(cfg, outdir, force)
    run_oracle(cfg, outdir, force)
    return code


def run_export_surface(checkpoint_path, cfg: dict, times, density: int, outdir, force=False) -> int:
    """CSV per time slice: columns x1, x2, V, Vdot on the grid restricted to
    the trajectory ellipsoid."""
    if density < 2:
        raise InputError("density must be at least 2")
    net = network.load_checkpoint(checkpoint_path)
    sys_ = build_system(cfg)
    dom = build_domain(cfg)
    if dom.n != 2:
        raise InputError("surface export is defined for 2-D state spaces")
    if net.state_dim != dom.n:
        raise InputError("checkpoint/domain dimension mismatch")
    outdir = Path(outdir)
    manifest = []
    for i, t in enumerate(times):
        t = float(t)
        if not dom.in_horizon(t):
            raise InputError(f"t = {t} outside [{dom.t0}, {dom.t_end}]")
        g = dom.trajectory.gamma_at(t)
        half = np.sqrt(np.diag(np.linalg.inv(g)))
        a = np.linspace(-half[0], half[0], density)
        b = np.linspace(-half[1], half[1], density)
        aa, bb = np.meshgrid(a, b, indexing="ij")
        cand = np.column_stack([aa.ravel(), bb.ravel()])
        pts = cand[quad_form(g, cand) <= 1.0]
        ts = np.full(len(pts), t)
        u = np.column_stack([ts, pts])
        v = network.forward_batch(net, u)
        f = sys_.batch(ts, pts)
        vdot = network.vdot_batch(net, u, np.column_stack([np.ones(len(pts)), f]))
        lines = ["x1,x2,V,Vdot"]
        for row, vi, di in zip(pts, v, vdot):
            lines.append(f"{row[0]!r},{row[1]!r},{vi!r},{di!r}")
        name = f"surface_{i:03d}.csv"
        atomic_write(outdir / name, "\n".join(lines) + "\n", force)
        manifest.append({"file": name, "t": t, "rows": int(len(pts))})
    atomic_write(outdir / "surface_index.json", _json_text(manifest), force)
    print(f"wrote {len(times)} surface slice(s) to {outdir}")
    return 0


def run_dlmi_check(
    checkpoint_path,
    cfg: dict,
    grid_dt: float = 0.01,
    fit_points: int = 500,
    seed: int = 0,
    shrink: float = 1e-3,
    outdir=None,
    force: bool = False,
) -> int:
    """Quadratic cross-check of a trained certificate for a linear system:
    fit P, rescale into the feasible band, verify the matrix conditions, and
    compare against the exact transition-matrix certificate Q(t)."""
    net = network.load_checkpoint(checkpoint_path)
    sys_ = build_system(cfg)
    dom = build_domain(cfg)
    if sys_.a_matrix is None:
        raise InputError(f"system {sys_.label!r} is not linear; no A(t) available")
    if net.state_dim != dom.n:
        raise InputError("checkpoint/domain dimension mismatch")
    grid = np.linspace(dom.t0, dom.t_end, int(round(dom.horizon / grid_dt)) + 1)
    pts = sample_at_time(dom, dom.t0, fit_points, seed)
    pform, resid = quadratic_fit(net, dom.t0, pts)
    gamma_of_t = dom.trajectory.gamma_at
    r = dom.initial.r_matrix

    raw = check_dlmi(pform, sys_.a_matrix, gamma_of_t, r, grid)
    lo, hi = scaling_interval(pform, gamma_of_t, r, grid)
    feasible = lo < hi
    beta = 0.5 * (lo + hi) if feasible else 1.0
    scaled = check_dlmi(scale_lyapunov(pform, beta), sys_.a_matrix, gamma_of_t, r, grid)

    qs = state_transition_q(sys_.a_matrix, r, dom.t0, grid)
    q_cover = np.array(
        [np.linalg.eigvalsh(qs[k] - gamma_of_t(float(t))).min() for k, t in enumerate(grid)]
    )
    p_from_q = check_dlmi((1.0 - shrink) * qs, sys_.a_matrix, gamma_of_t, r, grid)

    doc = {
        "fit": {"p_matrix": pform.p_matrix.tolist(), "rms_residual": resid},
        "scaling": {"beta_lo": lo, "beta_hi": hi, "beta": beta, "feasible": feasible},
        "dlmi_raw": raw.to_dict(),
        "dlmi_scaled": scaled.to_dict(),
        "q_construction": {
            "min_cover_eig": float(q_cover.min()),
            "shrink": shrink,
            "dlmi_passed": p_from_q.passed,
        },
    }
    if outdir is not None:
        atomic_write(Path(outdir) / "dlmi_report.json", _json_text(doc), force)
    verdict = scaled.passed
    print(
        f"dlmi {'pass' if verdict else 'fail'}: beta in ({lo:.4f}, {hi:.4f}), "
        f"fit residual {resid:.2e}"
    )
    return 0 if verdict else 2


DEMO_MAPS = ("contraction", "expansion")


def demo_discrete_setup(map_name: str, n_steps: int):
    """Built-in discrete demos: a halving map on shrinking balls (passes)
    and a doubling map on fixed unit balls (fails)."""
    if map_name == "contraction":
        dmap = DiscreteMap(
            dim=2,
            step=lambda k, x: 0.5 * x,
            inverse=lambda k, x: 2.0 * x,
            label="contraction",
        )
        radii = [6.0 * 0.9**k for k in range(n_steps + 1)]
        gammas = [np.eye(2) / r**2 for r in radii]
    elif map_name == "expansion":
        dmap = DiscreteMap(
            dim=2,
            step=lambda k, x: 2.0 * x,
            inverse=lambda k, x: 0.5 * x,
            label="expansion",
        )
        gammas = [np.eye(2) for _ in range(n_steps + 1)]
    else:
        raise InputError(f"unknown demo map {map_name!r}; known: {DEMO_MAPS}")
    seq = DiscreteDomainSeq(omega0=InitialSet(np.eye(2)), gammas=gammas, n_steps=n_steps)
    return dmap, seq


def run_discrete_check(
    map_name: str,
    n_steps: int = 10,
    samples: int = 1000,
    seed: int = 0,
    checkpoint_path=None,
    outdir=None,
    force: bool = False,
) -> int:
    """Sampled discrete-time conditions on a built-in demo; V is the squared
    norm unless a checkpoint is supplied."""
    dmap, seq = demo_discrete_setup(map_name, n_steps)
    if checkpoint_path is not None:
        v = network.load_checkpoint(checkpoint_path)
        if v.state_dim != seq.n:
            raise InputError("checkpoint/domain dimension mismatch")
    else:
        v = lambda k, x: float(np.dot(x, x))
    verdict = check_dt_conditions(v, dmap, seq, samples, seed)
    if outdir is not None:
        atomic_write(Path(outdir) / "discrete_report.json", _json_text(verdict.to_dict()), force)
    print(
        f"discrete {'pass' if verdict.passed else 'fail'}: "
        f"decrease_violations={verdict.decrease_violations}, gap={verdict.gap:.4g}"
    )
    return 0 if verdict.passed else 2
