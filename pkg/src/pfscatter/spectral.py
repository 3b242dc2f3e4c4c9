"""Ground states, complex-shift resolvent solves, eta-sweeps toward the real
axis, damped half-line phase integrals, Abelian limits and the operator-bound
diagnostics for ladder operators and the negative part of the potential.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate as si
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fock as fk
from .modes import omega_norm

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Eigensolver or linear solver failed to reach its tolerance."""


def _as_sparse(h):
    if hasattr(h, "to_sparse"):
        h = h.to_sparse()
    return sp.csr_matrix(h, dtype=complex)


# ----------------------------------------------------------------------------
# ground state
# ----------------------------------------------------------------------------

@dataclass
class GroundStateResult:
    energy: float
    vector: np.ndarray
    residual: float
    gap: float
    degenerate: bool
    top_sector_weight: float
    method: str
    low_energies: np.ndarray = field(default_factory=lambda: np.zeros(0))


def fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate so the first component of (nearly) maximal modulus is real positive."""
    mag = np.abs(v)
    i = int(np.flatnonzero(mag >= (1 - 1e-6) * mag.max())[0])
    return v * (np.conj(v[i]) / mag[i])


def _tie_break(vecs: np.ndarray) -> np.ndarray:
    """Deterministic unit vector in span(vecs): projection of the first basis
    vector with a non-negligible component."""
    proj_norms = np.linalg.norm(vecs, axis=1)
    i = int(np.flatnonzero(proj_norms > 1e-8)[0])
    v = vecs @ np.conj(vecs[i])
    return v / np.linalg.norm(v)


def ground_state(h, tol=1e-12, method="auto", dense_threshold=3000, gap_floor=1e-8,
                 photon_numbers=None, n_max=None) -> GroundStateResult:
    """Lowest eigenpair of a Hermitian operator.

    ``method`` is ``dense`` (LAPACK), ``lanczos`` (ARPACK) or ``auto``. When the
    gap to the next level is below ``gap_floor`` the result is flagged
    degenerate and the vector is fixed by a dense tie-break. ``photon_numbers``
    (per basis index) enables the top-sector weight report.
    """
    hs = _as_sparse(h)
    n = hs.shape[0]
    if method == "auto":
        method = "dense" if n <= dense_threshold else "lanczos"
    if method == "dense":
        vals, vecs = np.linalg.eigh(hs.toarray())
    elif method == "lanczos":
        k = min(3, n - 2)
        rng = np.random.default_rng(12345)
        v0 = rng.normal(size=n) + 1j * rng.normal(size=n)
        try:
            vals, vecs = spla.eigsh(hs, k=k, which="SA", tol=tol * 1e-2, v0=v0,
                                    ncv=min(n, max(4 * k + 1, 40)), maxiter=20 * n)
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"Lanczos did not converge; partial eigenvalues {exc.eigenvalues}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    else:
        raise ValueError(f"unknown eigensolver {method!r}")

    e0 = float(vals[0])
    gap = float(vals[1] - vals[0]) if len(vals) > 1 else math.inf
    degenerate = gap < gap_floor
    if degenerate:
        dense_vals, dense_vecs = np.linalg.eigh(hs.toarray())
        block = dense_vecs[:, np.abs(dense_vals - dense_vals[0]) < gap_floor]
        psi = _tie_break(block)
        e0 = float(dense_vals[0])
        log.warning("ground state degenerate (gap %.3g < %.3g); using tie-break vector", gap, gap_floor)
    else:
        psi = vecs[:, 0]
    psi = fix_phase(psi / np.linalg.norm(psi))
    residual = float(np.linalg.norm(hs @ psi - e0 * psi))
    scale = max(1.0, abs(e0))
    if residual > max(tol, 1e-10) * scale * 1e3:
        raise SolverError(f"ground-state residual {residual:.3g} above tolerance {tol:g}")
    top = math.nan
    if photon_numbers is not None:
        top_n = n_max if n_max is not None else int(np.max(photon_numbers))
        top = float(np.sum(np.abs(psi[np.asarray(photon_numbers) == top_n]) ** 2))
    return GroundStateResult(e0, psi, residual, gap, degenerate, top, method, np.asarray(vals[:3]))


# ----------------------------------------------------------------------------
# resolvent solves
# ----------------------------------------------------------------------------

@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float
    method: str


class ResolventSolver:
    """Solves ``(H - z) x = v``.

    ``gmres`` (default for large systems) runs ILU-preconditioned GMRES with a
    warm start and falls back to a sparse LU factorization when the residual
    target is missed; ``dense`` uses LAPACK. Factorizations are cached per
    shift, so repeated right-hand sides at one ``z`` are cheap.
    """

    def __init__(self, h, tol=1e-12, method="auto", dense_threshold=3000):
        self.h = _as_sparse(h)
        self.n = self.h.shape[0]
        self.tol = tol
        if method == "auto":
            method = "gmres"
        self.method = method
        self.dense_threshold = dense_threshold
        self._cache: dict = {}
        self._dense = None
        self._lock = threading.Lock()

    def _shifted(self, z):
        return (self.h - z * sp.identity(self.n, dtype=complex, format="csr")).tocsc()

    def _factor(self, z, kind):
        with self._lock:
            return self._factor_locked(z, kind)

    def _factor_locked(self, z, kind):
        key = (kind, complex(z))
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            a = self._shifted(z)
            if kind == "ilu":
                self._cache[key] = spla.spilu(a, drop_tol=1e-6, fill_factor=30)
            elif kind == "lu":
                self._cache[key] = spla.splu(a)
            else:
                if self._dense is None:
                    self._dense = self.h.toarray()
                self._cache[key] = sla.lu_factor(self._dense - z * np.eye(self.n))
        return self._cache[key]

    def _residual(self, z, x, v):
        return float(np.linalg.norm(self.h @ x - z * x - v))

    def solve(self, z, v, x0=None, allow_real=False) -> SolveResult:
        z = complex(z)
        if z.imag == 0 and not allow_real:
            raise ValueError("resolvent shift must have non-zero imaginary part")
        v = np.asarray(v, dtype=complex)
        vnorm = float(np.linalg.norm(v))
        if vnorm == 0:
            return SolveResult(np.zeros_like(v), 0, 0.0, "trivial")
        target = self.tol * vnorm
        method = self.method
        if method == "dense":
            x = sla.lu_solve(self._factor(z, "dense"), v)
            return SolveResult(x, 0, self._residual(z, x, v), "dense")
        if method == "lu":
            x = self._factor(z, "lu").solve(v)
            return SolveResult(x, 0, self._residual(z, x, v), "lu")
        ilu = self._factor(z, "ilu")
        pre = spla.LinearOperator((self.n, self.n), matvec=ilu.solve, dtype=complex)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.gmres(self._shifted(z), v, x0=x0, rtol=self.tol * 0.1, atol=0.0,
                             restart=min(100, self.n), maxiter=50, M=pre,
                             callback=cb, callback_type="pr_norm")
        res = self._residual(z, x, v)
        if info != 0 or res > target:
            log.info("GMRES missed target at z=%s (res %.3g); falling back to LU", z, res)
            x = self._factor(z, "lu").solve(v)
            res = self._residual(z, x, v)
            if res > target * 10:
                raise SolverError(f"resolvent solve failed at z={z}: residual {res:.3g}")
            return SolveResult(x, count[0], res, "lu-fallback")
        return SolveResult(x, count[0], res, "gmres")


def resolvent_solve(h, z, v, tol=1e-12, method="auto", x0=None) -> np.ndarray:
    """``x`` with ``(H - z) x = v`` for ``Im z != 0``."""
    return ResolventSolver(h, tol, method).solve(z, v, x0=x0).x


# ----------------------------------------------------------------------------
# boundary values
# ----------------------------------------------------------------------------

def richardson(etas, values):
    """Linear extrapolation to eta=0 through the two smallest etas."""
    etas = np.asarray(etas, dtype=float)
    values = np.asarray(values, dtype=complex)
    if len(etas) < 2:
        return complex(values[0])
    o = np.argsort(etas)
    e1, e2 = etas[o[0]], etas[o[1]]
    f1, f2 = values[o[0]], values[o[1]]
    return complex(f1 - e1 * (f2 - f1) / (e2 - e1))


@dataclass
class BoundaryValueResult:
    etas: np.ndarray
    values: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    extrapolated: complex
    previous_extrapolant: complex
    stable: bool
    cauchy_differences: np.ndarray


def extrapolate_sweep(etas, values, stability_tol=1e-2):
    """Richardson estimate plus a stability flag comparing the last two extrapolants."""
    etas = np.asarray(etas, dtype=float)
    values = np.asarray(values, dtype=complex)
    o = np.argsort(etas)[::-1]
    etas, values = etas[o], values[o]
    ext = richardson(etas, values)
    prev = richardson(etas[:-1], values[:-1]) if len(etas) >= 3 else ext
    stable = bool(len(etas) >= 3 and abs(ext - prev) <= stability_tol * max(1.0, abs(ext)))
    return ext, prev, stable, np.abs(np.diff(values))


def boundary_value(solver: ResolventSolver, left, right, base_shift, etas,
                   stability_tol=1e-2) -> BoundaryValueResult:
    """``<left, (H - base_shift - i eta)^{-1} right>`` over an eta schedule
    (processed from large to small eta, warm-starting each solve)."""
    etas = sorted((float(e) for e in etas), reverse=True)
    vals, res, its = [], [], []
    x = None
    for eta in etas:
        out = solver.solve(base_shift + 1j * eta, right, x0=x)
        x = out.x
        vals.append(np.vdot(left, x))
        res.append(out.residual)
        its.append(out.iterations)
    ext, prev, stable, cauchy = extrapolate_sweep(etas, vals, stability_tol)
    return BoundaryValueResult(np.array(etas), np.array(vals), np.array(res), np.array(its),
                               ext, prev, stable, cauchy)


# ----------------------------------------------------------------------------
# damped half-line time integrals
# ----------------------------------------------------------------------------

def gauss_legendre_panels(t_end: float, panel: float, order: int = 20):
    """Composite Gauss-Legendre nodes and weights on ``[0, t_end]``."""
    n_pan = max(1, int(math.ceil(t_end / panel)))
    edges = np.linspace(0.0, t_end, n_pan + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def horizon(eps: float, tail_tol: float) -> float:
    """Time ``T`` with ``exp(-eps T) = tail_tol``."""
    return -math.log(tail_tol) / eps


def damped_phase_sums(freqs, eps, t_end, order=20, sign=1, chunk=512, panel=None):
    """``sum_n q_n exp(-eps u_n) exp(-i sign u_n f)`` for every frequency ``f``:
    composite Gauss-Legendre for ``int_0^T e^{-eps u - i sign u f} du``.
    Panels are narrow enough that ``max|f| * panel <= 8``.
    """
    freqs = np.asarray(freqs, dtype=float)
    rho = max(float(np.max(np.abs(freqs))) if freqs.size else 0.0, eps, 1.0 / t_end)
    panel = panel if panel is not None else min(8.0 / rho, t_end)
    nodes, weights = gauss_legendre_panels(t_end, panel, order)
    flat = freqs.ravel()
    acc = np.zeros(flat.shape, dtype=complex)
    for s in range(0, nodes.size, chunk):
        u = nodes[s:s + chunk]
        q = weights[s:s + chunk] * np.exp(-eps * u)
        acc += q @ np.exp(-1j * sign * np.outer(u, flat))
    return acc.reshape(freqs.shape), nodes.size


@dataclass
class HalflineResult:
    quadrature: np.ndarray
    closed_form: np.ndarray
    rel_error: float
    horizon: float
    nodes: int
    quadrature_error_estimate: float


def _hermitian_dense(a):
    if hasattr(a, "to_dense"):
        return a.to_dense()
    if sp.issparse(a):
        return a.toarray()
    return np.asarray(a, dtype=complex)


def halfline_phase_integral(a, v, eps, t_end=None, tail_tol=1e-12, order=20,
                            method="spectral", estimate_error=True) -> HalflineResult:
    """Compare ``int_0^T e^{-it(A - i eps)} v dt`` (time quadrature) with the
    closed form ``-i (A - i eps)^{-1} v``.

    ``method='spectral'`` evaluates the propagator in the eigenbasis of ``A``;
    ``method='krylov'`` steps ``expm_multiply`` from node to node, for
    operators too large to diagonalize. The closed form is always a direct
    linear solve.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    v = np.asarray(v, dtype=complex)
    t_end = horizon(eps, tail_tol) if t_end is None else float(t_end)
    if method == "spectral":
        dense = _hermitian_dense(a)
        lam, u = np.linalg.eigh(dense)
        coef = u.conj().T @ v
        sums, nodes = damped_phase_sums(lam, eps, t_end, order)
        quad = u @ (sums * coef)
        err = 0.0
        if estimate_error:
            sums2, _ = damped_phase_sums(lam, eps, t_end, order + 8)
            err = float(np.linalg.norm(u @ ((sums2 - sums) * coef)))
        closed = -1j * np.linalg.solve(dense - 1j * eps * np.eye(len(v)), v)
    elif method == "krylov":
        asp = _as_sparse(a)
        rho = float(spla.norm(asp, 1))
        nodes_arr, weights = gauss_legendre_panels(t_end, min(8.0 / max(rho, eps), t_end), order)
        quad = np.zeros_like(v)
        cur, t_prev = v.copy(), 0.0
        for t, q in zip(nodes_arr, weights):
            cur = spla.expm_multiply(-1j * (t - t_prev) * asp, cur)
            t_prev = t
            quad += q * math.exp(-eps * t) * cur
        nodes, err = nodes_arr.size, math.nan
        closed = -1j * spla.spsolve((asp - 1j * eps * sp.identity(len(v))).tocsc(), v)
    else:
        raise ValueError(f"unknown method {method!r}")
    rel = float(np.linalg.norm(quad - closed) / max(np.linalg.norm(closed), 1e-300))
    return HalflineResult(quad, closed, rel, t_end, nodes, err)


# ----------------------------------------------------------------------------
# Abelian limits
# ----------------------------------------------------------------------------

@dataclass
class AbelianResult:
    epsilons: np.ndarray
    values: np.ndarray
    limit: complex
    stable: bool


def damped_integral(f, eps, breakpoints=(), tail_tol=1e-13, panel=None) -> complex:
    """``int_0^inf e^{-eps s} f(s) ds`` by adaptive quadrature on panels up to
    the horizon where the damping falls below ``tail_tol``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    t_end = horizon(eps, tail_tol)
    panel = panel or min(4.0, t_end)
    edges = np.unique(np.concatenate([np.arange(0.0, t_end, panel), [t_end],
                                      [b for b in breakpoints if 0 < b < t_end]]))
    total = 0j
    for lo, hi in zip(edges[:-1], edges[1:]):
        re = si.quad(lambda s: (np.exp(-eps * s) * f(s)).real, lo, hi, epsabs=1e-15, epsrel=1e-12, limit=200)[0]
        im = si.quad(lambda s: (np.exp(-eps * s) * complex(f(s))).imag, lo, hi, epsabs=1e-15, epsrel=1e-12, limit=200)[0]
        total += re + 1j * im
    return total


def abelian_limit(f, epsilons, breakpoints=(), tail_tol=1e-13, stability_tol=1e-2) -> AbelianResult:
    """Damped integrals of a bounded ``f`` for each ``eps`` and their linear
    extrapolation to ``eps -> 0``."""
    eps = np.array(sorted((float(e) for e in epsilons), reverse=True))
    vals = np.array([damped_integral(f, e, breakpoints, tail_tol) for e in eps])
    ext, prev, stable, _ = extrapolate_sweep(eps, vals, stability_tol)
    if len(eps) == 2:
        stable = True
    return AbelianResult(eps, vals, ext, stable)


# ----------------------------------------------------------------------------
# ladder-operator and form bounds
# ----------------------------------------------------------------------------

def spectral_norm(matvec, rmatvec, n, tol=1e-6, maxiter=5000, rng=0) -> float:
    """Largest singular value by power iteration on ``A^H A``."""
    rng = np.random.default_rng(rng)
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    x /= np.linalg.norm(x)
    sigma2 = 0.0
    for _ in range(maxiter):
        y = rmatvec(matvec(x))
        new = float(np.real(np.vdot(x, y)))
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
        if abs(new - sigma2) <= tol * max(abs(new), 1e-300):
            sigma2 = new
            break
        sigma2 = new
    return math.sqrt(max(sigma2, 0.0))


def ladder_product(basis: fk.FockBasis, weights, hs, kinds) -> sp.csr_matrix:
    """``a^#(h_1) ... a^#(h_n)`` with ``kinds[i]`` in {'*', 'a'}."""
    out = sp.identity(basis.dim, dtype=complex, format="csr")
    for h, kind in zip(hs, kinds):
        op = fk.create(basis, weights, h) if kind == "*" else fk.annihilate(basis, weights, h)
        out = out @ op.matrix
    return out.tocsr()


def verify_creation_bound(basis: fk.FockBasis, grid, hs, kinds=None, tol=1e-6, max_dim=20000) -> float:
    """``|| a^#(h_1)...a^#(h_n) (H_f+1)^{-n/2} || / prod ||h_i||_omega``
    (0 when some ``h_i`` vanishes)."""
    n = len(hs)
    kinds = kinds or "*" * n
    if basis.dim > max_dim:
        raise ValueError(f"Fock dimension {basis.dim} too large for norm estimation")
    denom = np.prod([omega_norm(h, grid) for h in hs])
    if denom == 0:
        return 0.0
    prod = ladder_product(basis, grid.weights, hs, kinds)
    damp = (fk.hf_diagonal(basis, grid.omega) + 1.0) ** (-n / 2)
    norm = spectral_norm(lambda x: prod @ (damp * x), lambda y: damp * (prod.conj().T @ y),
                         basis.dim, tol)
    return norm / denom


def random_photon_function(rng, n_modes):
    return rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes)


def calibrate_creation_constant(basis, grid, n, draws=200, seed=2024, kinds=None, margin=1.25) -> float:
    """Bound constant from a calibration pre-run: ``margin`` x the largest ratio
    over random draws plus single-mode draws (which probe the extreme
    directions)."""
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(draws):
        hs = [random_photon_function(rng, grid.n_modes) for _ in range(n)]
        ratios.append(verify_creation_bound(basis, grid, hs, kinds))
    for i in range(grid.n_modes):
        e = np.zeros(grid.n_modes, dtype=complex)
        e[i] = 1.0
        ratios.append(verify_creation_bound(basis, grid, [e] * n, kinds))
    return margin * max(ratios)


@dataclass
class FormBoundResult:
    eps: float
    d_eps: float
    min_eigenvalue: float
    steps: int
    lower: float = 0.0
    d_eps_unshifted: float = 0.0


def _is_psd(m: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(m)
        return True
    except np.linalg.LinAlgError:
        return False


def verify_form_bound(h, v_minus, eps, tol=1e-6, lower=None) -> FormBoundResult:
    """Smallest ``D >= 0`` (bisection to ``tol``) with ``eps (H - lower) + D - V_- >= 0``.

    ``lower`` defaults to ``inf sigma(H)``, so the operator in the bound is
    non-negative and ``D_eps`` is non-increasing in ``eps``. The constant for
    ``H`` itself is ``d_eps_unshifted = d_eps - eps * lower``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    dense = _hermitian_dense(h)
    n = dense.shape[0]
    eye = np.eye(n)
    if lower is None:
        lower = float(np.linalg.eigvalsh(dense)[0])
    base = eps * (dense - lower * eye) - np.diag(np.asarray(v_minus, dtype=float))
    lo, hi, steps = 0.0, 0.0, 0
    if not _is_psd(base + tol * 1e-3 * eye):
        hi = max(1.0, float(np.max(np.sum(np.abs(base), axis=1))))
        while not _is_psd(base + hi * eye):
            hi *= 2
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            steps += 1
            if _is_psd(base + mid * eye):
                hi = mid
            else:
                lo = mid
    min_eig = float(np.linalg.eigvalsh(base + hi * eye)[0])
    return FormBoundResult(eps, hi, min_eig, steps, lower, hi - eps * lower)
