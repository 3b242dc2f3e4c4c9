"""Command-line runner: ``pfscatter {ground-state,verify,tmatrix,smatrix,sweep}``.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 failed checks.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import checks, config, spectral
from . import report as rp
from .hamiltonian import ModelSizeError, PauliFierzModel
from .matter import MatterError, atomic_eigensystem
from .modes import GridError
from .scattering import Scattering

log = logging.getLogger("pfscatter")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECKS = 0, 1, 2, 3


class Context:
    """Shared state of one run: config, report, lazily built model/scattering."""

    def __init__(self, cfg, out_dir, command, threads=1):
        self.cfg = cfg
        self.threads = max(1, int(threads))
        self.report = rp.RunReport(command, config.dumps(cfg), out_dir)
        self._scat = None
        self._model = None

    @contextmanager
    def timed(self, label):
        t0 = time.perf_counter()
        yield
        self.report.timings[label] = time.perf_counter() - t0

    @property
    def model(self) -> PauliFierzModel:
        if self._model is None:
            with self.timed("assemble"):
                self._model = PauliFierzModel.from_config(self.cfg)
                _ = self._model.hamiltonian
        return self._model

    @property
    def scat(self) -> Scattering:
        if self._scat is None:
            model = self.model
            with self.timed("ground_state"):
                self._scat = Scattering.from_config(self.cfg, model)
        return self._scat

    def map(self, fn, items):
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(fn, items))


def _mode_columns(grid, i):
    return list(grid.k[i]) + [int(grid.polarization[i])]


def _mode_header(d, suffix=""):
    return [f"k{suffix}{a}" for a in range(d)] + [f"lambda{suffix}"]


def _ground_summary(g: spectral.GroundStateResult, model) -> dict:
    return {"energy": g.energy, "residual": g.residual, "gap": g.gap, "degenerate": g.degenerate,
            "top_sector_weight": g.top_sector_weight, "method": g.method,
            "low_energies": g.low_energies, "sector_weights": model.sector_weights(g.vector),
            "dim": model.dim, "dim_matter": model.dim_matter, "dim_fock": model.dim_fock}


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------

def cmd_ground_state(ctx: Context):
    """Ground state of the coupled model, with the atomic energy for reference."""
    cfg, rep = ctx.cfg, ctx.report
    scat = ctx.scat
    model = scat.model
    summary = _ground_summary(scat.ground, model)
    e_at, _ = atomic_eigensystem(model.matter, 1, cfg.solver.dense_threshold)
    summary["atomic_energy"] = float(e_at[0])
    if cfg.experiment.cross_check:
        with ctx.timed("cross_check"):
            other = "lanczos" if scat.ground.method == "dense" else "dense"
            alt = spectral.ground_state(model.hamiltonian, cfg.solver.eig_tol, method=other)
        summary["cross_check"] = {"method": other, "energy": alt.energy,
                                  "overlap_defect": 1 - abs(np.vdot(alt.vector, scat.ground.vector))}
        rep.check("ground_state.cross_check", abs(alt.energy - scat.ground.energy), 1e-9)
    rep.check("ground_state.residual", scat.ground.residual, checks.residual_tolerance(model.hamiltonian, cfg))
    rep.results["ground_state"] = summary
    rep.write_json("ground_state.json", summary)


def cmd_verify(ctx: Context):
    """Run the numerical identity and bound checks."""
    scat = ctx.scat
    with ctx.timed("checks"):
        checks.run_all(ctx.report, scat, ctx.cfg)
    ctx.report.results["ground_state"] = _ground_summary(scat.ground, scat.model)


def _tmatrix_rows(grid, pairs):
    rows = []
    for p in pairs:
        base = [p.i, p.i2] + _mode_columns(grid, p.i) + _mode_columns(grid, p.i2)
        for e in p.entries:
            v = e.value
            rows.append(base + ["eta", e.eta, v.real, v.imag, e.term1.real, e.term1.imag,
                                e.term2.real, e.term2.imag, e.term3.real, e.term3.imag, p.stable])
        t1, t3 = p.entries[0].term1, p.entries[0].term3
        t2 = p.extrapolated - t1 - t3
        rows.append(base + ["extrapolated", 0.0, p.extrapolated.real, p.extrapolated.imag,
                            t1.real, t1.imag, t2.real, t2.imag, t3.real, t3.imag, p.stable])
    return rows


def cmd_tmatrix(ctx: Context):
    """One-photon T-matrix over the eta schedule, with extrapolation."""
    cfg, rep = ctx.cfg, ctx.report
    scat = ctx.scat
    grid = scat.grid
    pairs = scat.mode_pairs(cfg.experiment.mode_pairs)
    _warm(scat)
    with ctx.timed("tmatrix"):
        table = ctx.map(lambda p: scat.t_pair(p[0], p[1], cfg.solver.eta_schedule, cfg.solver.stability_tol), pairs)
    d = grid.dimension
    header = (["i", "i2"] + _mode_header(d) + _mode_header(d, "p") +
              ["kind", "eta", "re_T", "im_T", "re_t1", "im_t1", "re_t2", "im_t2", "re_t3", "im_t3", "stable"])
    rep.write_csv("tmatrix.csv", header, _tmatrix_rows(grid, table))
    rep.plot("tmatrix", rp.tmatrix_plot_script())
    unstable = [(p.i, p.i2) for p in table if not p.stable]
    rep.results["tmatrix"] = {"pairs": len(table), "unstable_pairs": unstable,
                              "eta_schedule": list(cfg.solver.eta_schedule),
                              "max_abs_T": max((abs(p.extrapolated) for p in table), default=0.0)}
    if cfg.experiment.ray_scan:
        _ray_scan(ctx)


def _ray_scan(ctx: Context):
    cfg, rep, scat = ctx.cfg, ctx.report, ctx.scat
    mode = cfg.experiment.ray_mode
    if not 0 <= mode < scat.grid.n_modes:
        raise config.ConfigError(f"ray_mode {mode} out of range", "experiment", "ray_mode")
    radii = cfg.experiment.ray_radii
    if not radii:
        r0 = float(scat.grid.omega[mode])
        radii = tuple(r0 * (1 + x) for x in np.linspace(-0.2, 0.2, 21))
    eta = min(cfg.solver.eta_schedule)
    m = cfg.model
    with ctx.timed("ray_scan"):
        vals = ctx.map(lambda r: scat.ray_scan(mode, [r], eta=eta, charge=m.charge, cutoff_lambda=m.cutoff,
                                               cutoff_shape=m.cutoff_shape)[0], radii)
    rep.write_csv("ray_scan.csv", ["radius", "eta", "re_T", "im_T"],
                  [[r, eta, v.real, v.imag] for r, v in zip(radii, vals)])
    rep.plot("ray_scan", rp.ray_plot_script())
    jumps = np.abs(np.diff(vals)) if len(vals) > 1 else np.zeros(0)
    rep.results["ray_scan"] = {"mode": mode, "eta": eta, "points": len(radii),
                               "max_neighbor_jump": float(jumps.max()) if jumps.size else 0.0}


def _unit(m, i):
    e = np.zeros(m, dtype=complex)
    e[i] = 1.0
    return e


def default_wave_packets(grid):
    """``(f, h)`` on a shared shell and ``(f, h')`` with ``h'`` on another shell."""
    m = grid.n_modes
    shells = grid.shells()
    first = shells[0]
    f = _unit(m, int(first[0]))
    h_on = _unit(m, int(first[1] if len(first) > 1 else first[0]))
    h_off = _unit(m, int(shells[1][0])) if len(shells) > 1 else None
    return f, h_on, h_off


def _sweep_record(results):
    keys = ("eps", "lhs", "rhs", "lhs_resolvent", "discrepancy", "norm_defect", "prop_defect",
            "drift_defect", "quadrature_error", "identity_residual", "budget", "delta_form",
            "shared_shell_rhs", "asymptotic_norm_ratio")
    return {k: [getattr(r, k) for r in results] for k in keys}


def cmd_smatrix(ctx: Context):
    """Wave-packet S-matrix comparison over the epsilon schedule."""
    cfg, rep = ctx.cfg, ctx.report
    scat = ctx.scat
    grid = scat.grid
    f0, h_on, h_off = default_wave_packets(grid)
    f = grid.check_photon_function(cfg.experiment.f) if cfg.experiment.f else f0
    h = grid.check_photon_function(cfg.experiment.h) if cfg.experiment.h else h_on
    eps_list = sorted(cfg.solver.epsilon_schedule, reverse=True)
    tol = cfg.verify.quadrature_tol
    _warm(scat)
    with ctx.timed("smatrix"):
        main = ctx.map(lambda e: scat.s_matrix(f, h, e, "time", tol), eps_list)
    out = {"f": f, "h": h, "sweep": _sweep_record(main),
           "kernel": "2 eps / (eps^2 + (omega - omega')^2) -> 2 pi delta(omega - omega')"}
    rows = [[r.eps, r.discrepancy, r.budget, r.identity_residual, abs(r.lhs), abs(r.rhs)] for r in main]
    for r in main:
        rep.check(f"smatrix.eps={r.eps:g}", r.discrepancy, r.budget)
        rep.check(f"smatrix.identity.eps={r.eps:g}", r.identity_residual, tol)
    if h_off is not None and not cfg.experiment.f and not cfg.experiment.h:
        with ctx.timed("smatrix_offshell"):
            off = ctx.map(lambda e: scat.s_matrix(f, h_off, e, "time", tol), eps_list)
        ratio = [abs(a.rhs) / abs(b.rhs) if abs(b.rhs) > 0 else float("inf") for a, b in zip(main, off)]
        monotone = bool(all(ratio[j + 1] > ratio[j] for j in range(len(ratio) - 1)))
        out["offshell"] = {"h": h_off, "sweep": _sweep_record(off)}
        out["on_off_ratio"] = ratio
        out["on_off_ratio_increasing"] = monotone
        for r in off:
            rep.check(f"smatrix.offshell.eps={r.eps:g}", r.discrepancy, r.budget)
        rep.check("smatrix.on_off_ratio_increasing", 0.0 if monotone else 1.0, 0.0, passed=monotone)
    rep.write_json("smatrix.json", out)
    rep.write_csv("smatrix_sweep.csv", ["eps", "discrepancy", "budget", "identity_residual", "abs_lhs", "abs_rhs"], rows)
    rep.plot("smatrix_sweep", rp.smatrix_plot_script())
    rep.results["smatrix"] = {"eps": eps_list, "discrepancy": [r.discrepancy for r in main],
                              "budget": [r.budget for r in main]}


def cmd_sweep(ctx: Context):
    """Boundary-value eta sweeps over the configured mode pairs."""
    cfg, rep = ctx.cfg, ctx.report
    scat = ctx.scat
    grid = scat.grid
    pairs = scat.mode_pairs(cfg.experiment.mode_pairs)
    _warm(scat)

    def one(p):
        i, i2 = p
        return i, i2, spectral.boundary_value(scat.solver, scat.d1_psi(i), scat.d1_psi(i2),
                                              scat.energy + grid.omega[i2], cfg.solver.eta_schedule,
                                              cfg.solver.stability_tol)

    with ctx.timed("sweep"):
        results = ctx.map(one, pairs)
    d = grid.dimension
    header = ["i", "i2"] + _mode_header(d) + _mode_header(d, "p") + [
        "eta", "re", "im", "residual", "re_ext", "im_ext", "stable"]
    rows = []
    for i, i2, bv in results:
        base = [i, i2] + _mode_columns(grid, i) + _mode_columns(grid, i2)
        for eta, v, res in zip(bv.etas, bv.values, bv.residuals):
            rows.append(base + [eta, v.real, v.imag, res, bv.extrapolated.real, bv.extrapolated.imag, bv.stable])
    rep.write_csv("boundary_values.csv", header, rows)
    rep.plot("boundary_values", rp.boundary_plot_script())
    worst_res = max((float(np.max(bv.residuals / max(np.linalg.norm(scat.d1_psi(i2)), 1e-300)))
                     for i, i2, bv in results), default=0.0)
    rep.check("sweep.relative_residual", worst_res, max(cfg.solver.solve_tol * 10, 1e-12))
    rep.results["sweep"] = {
        "uniform_bound": max((float(np.max(np.abs(bv.values))) for _, _, bv in results), default=0.0),
        "unstable_pairs": [(i, i2) for i, i2, bv in results if not bv.stable],
        "cauchy_decreasing": [(i, i2) for i, i2, bv in results
                              if len(bv.cauchy_differences) < 2 or np.all(np.diff(bv.cauchy_differences) < 0)],
    }


def _warm(scat: Scattering):
    """Fill per-mode caches before any threaded work."""
    for i in range(scat.grid.n_modes):
        scat.d1_psi(i)
        scat.d1_adjoint_psi(i)
        scat._real_resolvent(i)


COMMANDS = {
    "ground-state": cmd_ground_state,
    "verify": cmd_verify,
    "tmatrix": cmd_tmatrix,
    "smatrix": cmd_smatrix,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pfscatter", description="Scattering checks for truncated Pauli-Fierz models.",
                                epilog=__doc__.splitlines()[2])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=(COMMANDS[name].__doc__ or name).strip().splitlines()[0])
        s.add_argument("--config", type=Path, help="INI run configuration (defaults if omitted)")
        s.add_argument("--out", type=Path, default=Path("pfscatter-out"), help="output directory")
        s.add_argument("--seed", type=int, help="override [run] seed")
        s.add_argument("--threads", type=int, default=1, help="worker threads for independent sweeps")
    sub.add_parser("config-reference", help="print every config key with its default")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "config-reference":
        print(config.reference())
        return EXIT_OK
    try:
        cfg = config.load(args.config) if args.config else config.RunConfig()
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        ctx = Context(cfg, args.out, args.command, args.threads)
        with ctx.timed("total"):
            COMMANDS[args.command](ctx)
        path = ctx.report.finalize()
    except (config.ConfigError, GridError, MatterError, ModelSizeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except spectral.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for c in ctx.report.checks:
        print(c.line())
    print(f"report: {path}")
    failed = ctx.report.failed
    if failed:
        print("failed checks: " + ", ".join(c.name for c in failed), file=sys.stderr)
        return EXIT_CHECKS
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
