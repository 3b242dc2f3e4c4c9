"""The invariant suite run by ``pfscatter verify``. Every check records its
measured value and the tolerance it is held to on a :class:`RunReport`."""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import spectral
from .hamiltonian import PauliFierzModel
from .report import RunReport
from .scattering import Scattering

ABELIAN_FAMILIES = {
    # name: (f, closed-form damped integral I(eps), limit, breakpoints)
    "exp": (lambda s: math.exp(-s), lambda e: 1 / (1 + e), 1.0, ()),
    "exp_cos": (lambda s: math.exp(-s) * math.cos(s), lambda e: (1 + e) / ((1 + e) ** 2 + 1), 0.5, ()),
    "indicator": (lambda s: 1.0 if s <= 1 else 0.0, lambda e: -math.expm1(-e) / e, 1.0, (1.0,)),
}


def guard_level(model: PauliFierzModel) -> int:
    """Largest photon number on which the ladder identities hold exactly."""
    return max(model.fock.n_max - 2, 0)


def random_photon(rng, m):
    return rng.normal(size=m) + 1j * rng.normal(size=m)


def residual_tolerance(h, cfg) -> float:
    """Eigen-residual target: ``eig_tol`` relative to ``||H||_1``."""
    return cfg.solver.eig_tol * max(1.0, float(spla.norm(h, 1)))


def check_ground_state(report: RunReport, scat: Scattering, cfg):
    g = scat.ground
    report.check("ground_state.residual", g.residual, residual_tolerance(scat.h, cfg))
    report.check("ground_state.norm", abs(np.linalg.norm(g.vector) - 1), 1e-13)


def check_ccr(report: RunReport, model: PauliFierzModel, cfg, rng):
    v = cfg.verify
    worst = {"a_astar": 0.0, "a_a": 0.0, "astar_astar": 0.0}
    level = guard_level(model)
    for _ in range(v.random_pairs):
        g, h = random_photon(rng, model.grid.n_modes), random_photon(rng, model.grid.n_modes)
        psi = model.random_guarded_state(rng, level)
        for k, val in model.ccr_residuals(g, h, psi).items():
            worst[k] = max(worst[k], val)
    for k, val in worst.items():
        report.check(f"ccr.{k}", val, v.ccr_tol, guard_level=level)


def check_commutators(report: RunReport, model: PauliFierzModel, cfg, rng):
    v = cfg.verify
    level = guard_level(model)
    m = model.grid.n_modes
    c1 = c2 = 0.0
    for _ in range(v.random_states):
        psi = model.random_guarded_state(rng, level)
        h = random_photon(rng, m)
        for i in range(m):
            e = np.zeros(m, dtype=complex)
            e[i] = 1.0
            c1 = max(c1, model.comm1_residual(e, psi))
            c2 = max(c2, model.comm2_residual(h, i, psi))
        c1 = max(c1, model.comm1_residual(h, psi))
    report.check("commutator.first", c1, v.comm_tol, guard_level=level)
    report.check("commutator.second", c2, v.comm_tol, guard_level=level)


def check_pull_through(report: RunReport, scat: Scattering, cfg):
    top = scat.ground.top_sector_weight
    worst_ratio, rows = 0.0, []
    for i in range(scat.grid.n_modes):
        p = scat.pull_through(i)
        budget = cfg.verify.pull_factor * math.sqrt(max(top, 0.0)) * p.scale
        rows.append({"mode": i, "residual": p.residual, "budget": budget})
        if p.residual > 0:
            worst_ratio = max(worst_ratio, p.residual / budget if budget > 0 else math.inf)
    report.check("pull_through", worst_ratio, 1.0, top_sector_weight=top, modes=rows)
    return rows


def check_halfline(report: RunReport, scat: Scattering, cfg):
    a = scat.h - scat.energy * sp.identity(scat.model.dim, format="csr", dtype=complex)
    v = scat.d1_psi(0)
    if not np.any(v):
        v = scat.model.create(np.ones(scat.grid.n_modes)) @ scat.psi
    method = "spectral" if scat.model.dim <= cfg.solver.dense_threshold else "krylov"
    for eps in sorted(set(cfg.solver.epsilon_schedule) | {0.5, 0.1, 0.05}, reverse=True):
        r = spectral.halfline_phase_integral(a, v, eps, tail_tol=min(cfg.solver.tail_tol, 1e-12), method=method)
        report.check(f"halfline.eps={eps:g}", r.rel_error, cfg.verify.halfline_tol, nodes=r.nodes)


def check_abelian(report: RunReport, cfg, epsilons=(0.1, 0.01)):
    factor = cfg.verify.abelian_factor
    for name, (f, closed, limit, brk) in ABELIAN_FAMILIES.items():
        res = spectral.abelian_limit(f, epsilons, brk, tail_tol=cfg.solver.tail_tol)
        for eps, val in zip(res.epsilons, res.values):
            report.check(f"abelian.{name}.eps={eps:g}", abs(val - limit), factor * eps,
                         closed_form_error=abs(val - closed(eps)))
        report.results.setdefault("abelian_extrapolated", {})[name] = res.limit


def check_two_path(report: RunReport, scat: Scattering, cfg, rng):
    h = random_photon(rng, scat.grid.n_modes)
    for eps in cfg.solver.epsilon_schedule:
        for direction in ("in", "out"):
            rel = scat.cross_check_paths(h, eps, direction)
            report.check(f"cook_two_path.{direction}.eps={eps:g}", rel, cfg.verify.quadrature_tol)


def check_prop_tmat(report: RunReport, scat: Scattering, cfg, rng, eps=0.1, draws=3):
    tol = cfg.verify.quadrature_tol
    worst_disc_ratio, worst_ident = 0.0, 0.0
    for _ in range(draws):
        h = random_photon(rng, scat.grid.n_modes)
        for i in range(scat.grid.n_modes):
            c = scat.verify_prop_tmat(i, h, eps, "time", tol)
            worst_disc_ratio = max(worst_disc_ratio, c.discrepancy / c.budget)
            worst_ident = max(worst_ident, c.identity_residual)
    report.check("prop_tmat.discrepancy_over_budget", worst_disc_ratio, 1.0, eps=eps)
    report.check("prop_tmat.identity_residual", worst_ident, tol, eps=eps)


def check_intertwine(report: RunReport, scat: Scattering, cfg, rng, eps=0.1):
    f = random_photon(rng, scat.grid.n_modes)
    worst = 0.0
    rows = []
    for t in cfg.experiment.intertwine_times:
        c = scat.verify_intertwine(f, t, eps)
        worst = max(worst, c.prediction_mismatch)
        rows.append({"t": t, "discrepancy": c.discrepancy, "predicted": c.predicted, "drift_bound": c.drift_bound})
    report.check("intertwine.prediction_mismatch", worst, cfg.verify.comm_tol, eps=eps, times=rows)


def check_creation_bound(report: RunReport, model: PauliFierzModel, cfg, rng):
    basis, grid = model.fock, model.grid
    draws = cfg.verify.creation_draws
    for n in (1, 2):
        c_hat = spectral.calibrate_creation_constant(basis, grid, n, draws=draws, seed=cfg.seed + 7919)
        worst = 0.0
        for _ in range(draws):
            hs = [random_photon(rng, grid.n_modes) for _ in range(n)]
            worst = max(worst, spectral.verify_creation_bound(basis, grid, hs))
        report.check(f"creation_bound.n={n}", worst, c_hat, calibrated_constant=c_hat)


def check_form_bound(report: RunReport, model: PauliFierzModel, cfg):
    eps_list = sorted(cfg.verify.form_epsilons, reverse=True)
    results = [spectral.verify_form_bound(model.hamiltonian, model.potential_negative_part, e)
               for e in eps_list]
    for r in results:
        report.check(f"form_bound.eps={r.eps:g}.negativity", max(0.0, -r.min_eigenvalue), cfg.verify.min_eig_tol,
                     passed=bool(np.isfinite(r.d_eps) and r.min_eigenvalue >= -cfg.verify.min_eig_tol),
                     d_eps=r.d_eps, min_eigenvalue=r.min_eigenvalue)
    d = [r.d_eps for r in results]
    increase = max([d[j] - d[j + 1] for j in range(len(d) - 1)] + [0.0])
    report.check("form_bound.monotone", increase, 1e-6, d_eps=dict(zip(map(str, eps_list), d)))


def run_all(report: RunReport, scat: Scattering, cfg):
    """The full suite, in a fixed order with one seeded generator."""
    rng = np.random.default_rng(cfg.seed)
    model = scat.model
    check_ground_state(report, scat, cfg)
    check_ccr(report, model, cfg, rng)
    check_commutators(report, model, cfg, rng)
    check_pull_through(report, scat, cfg)
    check_halfline(report, scat, cfg)
    check_abelian(report, cfg)
    check_two_path(report, scat, cfg, rng)
    check_prop_tmat(report, scat, cfg, rng, eps=min(cfg.solver.epsilon_schedule))
    check_intertwine(report, scat, cfg, rng, eps=min(cfg.solver.epsilon_schedule))
    check_creation_bound(report, model, cfg, rng)
    check_form_bound(report, model, cfg)
    return report
