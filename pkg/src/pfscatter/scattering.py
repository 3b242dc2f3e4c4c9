"""Time evolution, Cook-regularized asymptotic creation operators acting on the
ground state, the pull-through residual, the T-matrix and the scattering-matrix
verifiers.

Notation: ``psi`` is the ground state, ``E`` its energy, ``D1_K = D1(k_K)`` for
grid mode ``K`` and ``R^-_K = (H - E - omega_K - i eps)^{-1}``,
``R^+_K = (H - E - omega_K + i eps)^{-1}``.

The regularized asymptotic vectors are

    a*_in,eps(h) psi  = a*(h) psi - sum_K w_K h_K R^-_K D1_K psi
    a*_out,eps(h) psi = a*(h) psi - sum_K w_K h_K R^+_K D1_K psi

computed either by the damped time integral of the Cook derivative (path
``time``) or by the closed resolvent form (path ``resolvent``). The two agree
up to quadrature error; cross-checking them is part of the verification.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import spectral
from .hamiltonian import PauliFierzModel
from .modes import cutoff

log = logging.getLogger(__name__)

PATHS = ("time", "resolvent")


# ----------------------------------------------------------------------------
# propagation
# ----------------------------------------------------------------------------

class Propagator:
    """``exp(-i t H)``: dense eigendecomposition or Krylov ``expm_multiply``."""

    def __init__(self, h, method="auto", dense_threshold=3000):
        self.h = spectral._as_sparse(h)
        n = self.h.shape[0]
        if method == "auto":
            method = "dense" if n <= dense_threshold else "krylov"
        if method not in ("dense", "krylov"):
            raise ValueError(f"unknown propagator {method!r}")
        self.method = method

    @cached_property
    def eig(self):
        return np.linalg.eigh(self.h.toarray())

    def apply(self, psi, t: float) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        if t == 0:
            return psi.copy()
        if self.method == "dense":
            lam, u = self.eig
            return u @ (np.exp(-1j * t * lam) * (u.conj().T @ psi))
        return spla.expm_multiply(-1j * t * self.h, psi)


# ----------------------------------------------------------------------------
# result records
# ----------------------------------------------------------------------------

@dataclass
class PullThroughResult:
    mode: int
    residual: float
    scale: float
    vector: np.ndarray = field(repr=False)


@dataclass
class TEntry:
    """One T-matrix value at a given eta, with its three contributions."""
    i: int
    i2: int
    eta: float
    term1: complex
    term2: complex
    term3: complex

    @property
    def value(self) -> complex:
        return self.term1 + self.term2 + self.term3


@dataclass
class TPair:
    i: int
    i2: int
    entries: list
    extrapolated: complex
    previous_extrapolant: complex
    stable: bool
    boundary: spectral.BoundaryValueResult


@dataclass
class PropCheck:
    mode: int
    eps: float
    lhs: complex
    rhs: complex
    discrepancy: float
    guard_defect: complex
    pull_defect: complex
    quadrature_tol: float
    budget: float
    identity_residual: float


@dataclass
class IntertwineCheck:
    t: float
    eps: float
    discrepancy: float
    predicted: float
    prediction_mismatch: float
    drift_bound: float


@dataclass
class SMatrixResult:
    eps: float
    lhs: complex
    rhs: complex
    lhs_resolvent: complex
    discrepancy: float
    norm_defect: complex
    prop_defect: complex
    drift_defect: complex
    quadrature_error: float
    identity_residual: float
    budget: float
    delta_form: complex
    shared_shell_rhs: complex
    asymptotic_norm_ratio: float

    @property
    def within_budget(self) -> bool:
        return self.discrepancy <= self.budget


# ----------------------------------------------------------------------------
# main object
# ----------------------------------------------------------------------------

class Scattering:
    """Ground-state scattering quantities for a truncated model.

    Resolvent solves go through one :class:`~pfscatter.spectral.ResolventSolver`
    (factorizations cached per shift); ``D1_K psi`` and ``D1_K^* psi`` are
    cached per mode.
    """

    def __init__(self, model: PauliFierzModel, ground: spectral.GroundStateResult | None = None,
                 tol=1e-12, dense_threshold=3000, solver_method="auto", tail_tol=1e-13,
                 quadrature_order=20):
        self.model = model
        self.grid = model.grid
        self.h = model.hamiltonian
        self.dense_threshold = dense_threshold
        if ground is None:
            ground = spectral.ground_state(self.h, tol, dense_threshold=dense_threshold,
                                           photon_numbers=model.photon_numbers, n_max=model.fock.n_max)
        self.ground = ground
        self.psi = ground.vector
        self.energy = ground.energy
        self.solver = spectral.ResolventSolver(self.h, tol, solver_method, dense_threshold)
        self.propagator = Propagator(self.h, dense_threshold=dense_threshold)
        self.tail_tol = tail_tol
        self.order = quadrature_order
        self._d1psi = {}
        self._d1adj_psi = {}
        self._cook = {}
        self._real_solves = {}

    @classmethod
    def from_config(cls, cfg, model=None, ground=None) -> "Scattering":
        model = model or PauliFierzModel.from_config(cfg)
        s = cfg.solver
        if ground is None:
            ground = spectral.ground_state(model.hamiltonian, s.eig_tol, dense_threshold=s.dense_threshold,
                                           gap_floor=s.gap_floor, photon_numbers=model.photon_numbers,
                                           n_max=model.fock.n_max)
        return cls(model, ground, s.solve_tol, s.dense_threshold, tail_tol=s.tail_tol)

    # -------------------------------------------------------------- caches
    def d1_psi(self, i: int) -> np.ndarray:
        if i not in self._d1psi:
            self._d1psi[i] = self.model.d1(i) @ self.psi
        return self._d1psi[i]

    def d1_adjoint_psi(self, i: int) -> np.ndarray:
        if i not in self._d1adj_psi:
            self._d1adj_psi[i] = self.model.d1_adjoint(i) @ self.psi
        return self._d1adj_psi[i]

    def _real_resolvent(self, i: int) -> np.ndarray:
        """``(H + omega_i - E)^{-1} D1_i^* psi`` (positive operator, real shift)."""
        if i not in self._real_solves:
            z = self.energy - self.grid.omega[i]
            self._real_solves[i] = self.solver.solve(z, self.d1_adjoint_psi(i), allow_real=True).x
        return self._real_solves[i]

    @property
    def omega(self) -> np.ndarray:
        return self.grid.omega

    @cached_property
    def truncation_defects(self) -> np.ndarray:
        """(M, dim) rows ``([H, c_K] - omega_K c_K - D1_K) psi`` with
        ``c_K = b_K^dagger / sqrt(w_K)``. Nonzero only through the photon cutoff."""
        rows = []
        hpsi = self.h @ self.psi
        for i in range(self.grid.n_modes):
            c = self.model.mode_annihilate(i).conj().T
            cpsi = c @ self.psi
            rows.append(self.h @ cpsi - c @ hpsi - self.omega[i] * cpsi - self.d1_psi(i))
        return np.array(rows)

    # -------------------------------------------------- Cook corrections
    def cook_vectors(self, eps: float, direction="in", path="resolvent") -> np.ndarray:
        """(M, dim) array whose row K is ``-R^-_K D1_K psi`` (``in``) or
        ``-R^+_K D1_K psi`` (``out``)."""
        if eps <= 0:
            raise ValueError("eps must be positive")
        if direction not in ("in", "out"):
            raise ValueError("direction must be 'in' or 'out'")
        if path not in PATHS:
            raise ValueError(f"path must be one of {PATHS}")
        key = (float(eps), direction, path)
        if key in self._cook:
            return self._cook[key]
        m = self.grid.n_modes
        out = np.empty((m, self.model.dim), dtype=complex)
        if path == "resolvent":
            for i in range(m):
                shift = -1j * eps if direction == "out" else 1j * eps
                out[i] = -self.solver.solve(self.energy + self.omega[i] + shift, self.d1_psi(i)).x
        elif self.propagator.method == "dense":
            out[:] = self._cook_time_dense(eps, direction)
        else:
            out[:] = self._cook_time_krylov(eps, direction)
        self._cook[key] = out
        return out

    def _cook_time_dense(self, eps, direction):
        # in:  -i int_0^inf e^{-eps u} e^{-iu(H - E - omega)} D1 psi du
        # out: +i int_0^inf e^{-eps u} e^{+iu(H - E - omega)} D1 psi du
        lam, u = self.propagator.eig
        t_end = spectral.horizon(eps, self.tail_tol)
        d1 = np.column_stack([self.d1_psi(i) for i in range(self.grid.n_modes)])
        coef = u.conj().T @ d1
        freqs = lam[:, None] - self.energy - self.omega[None, :]
        sign = 1 if direction == "in" else -1
        sums, _ = spectral.damped_phase_sums(freqs, eps, t_end, self.order, sign=sign)
        pref = -1j if direction == "in" else 1j
        return (pref * (u @ (sums * coef))).T

    def _cook_time_krylov(self, eps, direction):
        t_end = spectral.horizon(eps, self.tail_tol)
        hs = self.h - self.energy * sp.identity(self.model.dim, format="csr")
        rho = float(spla.norm(hs, 1)) + float(np.max(self.omega))
        nodes, weights = spectral.gauss_legendre_panels(t_end, min(8.0 / rho, t_end), self.order)
        sign = 1 if direction == "in" else -1
        cur = np.column_stack([self.d1_psi(i) for i in range(self.grid.n_modes)])
        acc = np.zeros_like(cur)
        t_prev = 0.0
        for t, q in zip(nodes, weights):
            cur = spla.expm_multiply(-1j * sign * (t - t_prev) * hs, cur)
            t_prev = t
            acc += q * math.exp(-eps * t) * cur * np.exp(1j * sign * t * self.omega)[None, :]
        pref = -1j if direction == "in" else 1j
        return (pref * acc).T

    def asymptotic_create(self, h, eps, direction="in", path="resolvent") -> np.ndarray:
        """``a*_{in/out,eps}(h) psi``."""
        h = self.grid.check_photon_function(h)
        q = self.cook_vectors(eps, direction, path)
        return self.model.create(h) @ self.psi + (self.grid.weights * h) @ q

    # --------------------------------------------------------- pull-through
    def pull_through(self, i: int) -> PullThroughResult:
        """``a(k_i) psi + (H + omega_i - E)^{-1} D1_i^* psi``."""
        r = self.model.mode_annihilate(i) @ self.psi + self._real_resolvent(i)
        return PullThroughResult(i, float(np.linalg.norm(r)),
                                 float(np.linalg.norm(self.d1_adjoint_psi(i))), r)

    # -------------------------------------------------------------- T-matrix
    def t_entry(self, i: int, i2: int, eta: float) -> TEntry:
        if eta <= 0:
            raise ValueError("eta must be positive")
        term1 = -np.vdot(self._real_resolvent(i2), self.d1_adjoint_psi(i))
        x2 = self.solver.solve(self.energy + self.omega[i2] + 1j * eta, self.d1_psi(i2)).x
        term2 = -np.vdot(self.d1_psi(i), x2)
        term3 = self._term3(i, i2)
        return TEntry(i, i2, float(eta), complex(term1), complex(term2), term3)

    def _term3(self, i, i2) -> complex:
        d2 = np.repeat(self.model.d2(i, i2), self.model.dim_fock)
        return complex(np.vdot(d2 * self.psi, self.psi))

    def t_value(self, i: int, i2: int, eta: float) -> complex:
        return self.t_entry(i, i2, eta).value

    def t_pair(self, i: int, i2: int, etas, stability_tol=1e-2) -> TPair:
        """T over an eta schedule plus its eta -> 0 extrapolation."""
        bv = spectral.boundary_value(self.solver, self.d1_psi(i), self.d1_psi(i2),
                                     self.energy + self.omega[i2], etas, stability_tol)
        term1 = complex(-np.vdot(self._real_resolvent(i2), self.d1_adjoint_psi(i)))
        term3 = self._term3(i, i2)
        entries = [TEntry(i, i2, float(e), term1, complex(-v), term3) for e, v in zip(bv.etas, bv.values)]
        return TPair(i, i2, entries, term1 + term3 - bv.extrapolated,
                     term1 + term3 - bv.previous_extrapolant, bv.stable, bv)

    def mode_pairs(self, spec="all") -> list[tuple[int, int]]:
        m = self.grid.n_modes
        if spec == "all":
            return [(i, j) for i in range(m) for j in range(m)]
        if spec == "diagonal":
            return [(i, i) for i in range(m)]
        if spec == "shell":
            return self.grid.shell_pairs()
        pairs = [(int(i), int(j)) for i, j in spec]
        for i, j in pairs:
            if not (0 <= i < m and 0 <= j < m):
                raise ValueError(f"mode pair ({i}, {j}) out of range 0..{m - 1}")
        return pairs

    def t_table(self, pairs="all", etas=(0.4, 0.2, 0.1, 0.05), stability_tol=1e-2) -> list[TPair]:
        return [self.t_pair(i, j, etas, stability_tol) for i, j in self.mode_pairs(pairs)]

    def t_matrix(self, eta: float) -> np.ndarray:
        """Full (M, M) matrix ``T_eta(K, K')``."""
        m = self.grid.n_modes
        return np.array([[self.t_value(i, j, eta) for j in range(m)] for i in range(m)])

    # general momenta (continuity scans)
    def t_general(self, k, eps_vec, kappa, k2, eps2, kappa2, eta) -> complex:
        """T for momenta off the grid, built from fresh D1/D2 operators."""
        model = self.model
        d1a = model.d1_operator(k, eps_vec, kappa)
        d1b = model.d1_operator(k2, eps2, kappa2)
        w2 = float(np.linalg.norm(k2))
        adj_a = d1a.conj().T @ self.psi
        adj_b = d1b.conj().T @ self.psi
        x1 = self.solver.solve(self.energy - w2, adj_b, allow_real=True).x
        x2 = self.solver.solve(self.energy + w2 + 1j * eta, d1b @ self.psi).x
        d2 = np.repeat(model.d2_values(k, eps_vec, kappa, k2, eps2, kappa2), model.dim_fock)
        return complex(-np.vdot(x1, adj_a) - np.vdot(d1a @ self.psi, x2) + np.vdot(d2 * self.psi, self.psi))

    def ray_scan(self, mode: int, radii, partner: int | None = None, eta=0.1,
                 charge=0.1, cutoff_lambda=2.0, cutoff_shape="sharp") -> np.ndarray:
        """``T_eta(r n, K')`` along the ray through grid mode ``mode``; the
        cutoff is re-evaluated at each radius."""
        g = self.grid
        partner = mode if partner is None else partner
        n = g.k[mode] / np.linalg.norm(g.k[mode])
        out = []
        for r in radii:
            kap = complex(cutoff(np.array([r]), charge, cutoff_lambda, cutoff_shape)[0])
            out.append(self.t_general(r * n, g.eps[mode], kap, g.k[partner], g.eps[partner],
                                      g.kappa[partner], eta))
        return np.array(out)

    # ------------------------------------------------- verification checks
    def verify_prop_tmat(self, i: int, h, eps: float, path="time", quadrature_tol=1e-6) -> PropCheck:
        """Compare ``<D1_i psi, a*_in,eps(h) psi>`` with ``sum_K' w h T_eps(i, K')``.

        On the truncated space the identity picks up two exact defects: the
        commutator defect ``<([a(h), D1_i] - sum w conj(h) D2) psi, psi>`` and
        the pull-through defect ``sum_K' w h <r_K', D1_i^* psi>``. Their sum is
        the predicted discrepancy; ``identity_residual`` is the mismatch, which
        must stay at quadrature level.
        """
        h = self.grid.check_photon_function(h)
        w = self.grid.weights
        lhs = complex(np.vdot(self.d1_psi(i), self.asymptotic_create(h, eps, "in", path)))
        rhs = complex(sum(w[j] * h[j] * self.t_value(i, j, eps) for j in range(self.grid.n_modes) if h[j] != 0))
        guard = complex(np.vdot(self.model.comm2_vector(h, i, self.psi), self.psi))
        pull = complex(sum(w[j] * h[j] * np.vdot(self.pull_through(j).vector, self.d1_adjoint_psi(i))
                           for j in range(self.grid.n_modes) if h[j] != 0))
        disc = abs(lhs - rhs)
        ident = abs(lhs - rhs - guard - pull)
        budget = quadrature_tol + abs(guard) + abs(pull)
        return PropCheck(i, eps, lhs, rhs, disc, guard, pull, quadrature_tol, budget, ident)

    def verify_intertwine(self, f, t: float, eps: float) -> IntertwineCheck:
        """``e^{iHt} a*_in,eps(f) psi`` against ``a*_in,eps(e^{i omega t} f) e^{iHt} psi``.

        With the resolvent path the difference has the closed form
        ``|| int_0^t e^{-i(H-E)s} sum_K w f_K e^{i omega_K s} (eps q_K - i delta_K) ds ||``
        (``q_K`` the Cook vectors, ``delta_K`` the truncation defects),
        evaluated here in the eigenbasis. ``drift_bound`` bounds the ``eps``
        part alone.
        """
        f = self.grid.check_photon_function(f)
        w = self.grid.weights
        lhs = self.propagator.apply(self.asymptotic_create(f, eps, "in"), -t)
        rhs = np.exp(1j * self.energy * t) * self.asymptotic_create(np.exp(1j * self.omega * t) * f, eps, "in")
        disc = float(np.linalg.norm(lhs - rhs))
        q = self.cook_vectors(eps, "in", "resolvent")
        lam, u = self.propagator.eig
        src = eps * q - 1j * self.truncation_defects
        coef = u.conj().T @ ((w * f)[:, None] * src).T
        a = lam[:, None] - self.energy - self.omega[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where(np.abs(a * t) < 1e-8, t + 0j, (np.exp(-1j * a * t) - 1) / (-1j * a))
        drift = u @ np.sum(phi * coef, axis=1)
        pred = float(np.linalg.norm(drift))
        bound = eps * abs(t) * float(np.sum(np.abs(w * f) * np.linalg.norm(q, axis=1)))
        return IntertwineCheck(float(t), float(eps), disc, pred, abs(disc - pred), bound)

    def lorentzian(self, eps: float) -> np.ndarray:
        """``F_K(omega_K') = 2 eps / (eps^2 + (omega_K - omega_K')^2)``."""
        dw = self.omega[:, None] - self.omega[None, :]
        return 2 * eps / (eps ** 2 + dw ** 2)

    def s_matrix(self, f, h, eps: float, path="time", quadrature_tol=1e-6) -> SMatrixResult:
        """``<a*_out,eps(f) psi, a*_in,eps(h) psi> - <f, h>`` against the
        Lorentzian-smeared T-matrix sum, with the exact defect decomposition

            LHS - RHS = X + P + D

        X: norm defect ``<in(f), in(h)> - <f, h>``; P: proposition defect
        weighted by the Lorentzian; D: the eps-drift of the in-states along the
        free evolution (including the photon-cutoff defect of the commutator).
        All three are computed from resolvent-path vectors.
        """
        f = self.grid.check_photon_function(f)
        h = self.grid.check_photon_function(h)
        g = self.grid
        w = g.weights
        m = g.n_modes
        t_eps = self.t_matrix(eps)
        kern = self.lorentzian(eps)
        coeff = np.outer(w * np.conj(f), w * h) * kern
        rhs = complex(-1j * np.sum(coeff * t_eps))

        out_f = self.asymptotic_create(f, eps, "out", path)
        in_h = self.asymptotic_create(h, eps, "in", path)
        lhs = complex(np.vdot(out_f, in_h) - g.inner(f, h))
        out_fb = self.asymptotic_create(f, eps, "out", "resolvent")
        in_hb = self.asymptotic_create(h, eps, "in", "resolvent")
        lhs_b = complex(np.vdot(out_fb, in_hb) - g.inner(f, h))
        quad_err = abs(lhs - lhs_b)

        in_fb = self.asymptotic_create(f, eps, "in", "resolvent")
        norm_defect = complex(np.vdot(in_fb, in_hb) - g.inner(f, h))

        q_in = self.cook_vectors(eps, "in", "resolvent")    # -R^-_K D1_K psi
        q_out = self.cook_vectors(eps, "out", "resolvent")  # -R^+_K D1_K psi
        xi = np.array([self.model.mode_annihilate(j).conj().T @ self.psi for j in range(m)]) + q_in
        prop = np.array([[np.vdot(self.d1_psi(i), xi[j]) for j in range(m)] for i in range(m)]) - t_eps
        prop_defect = complex(-1j * np.sum(coeff * prop))

        # drift: -i sum w w' conj(f) h <D1_K psi, c_KK'>, with
        # <D1_K psi, c_KK'> = i [<R+_K D1_K psi, d'>/(w'-z1) - <R-_K D1_K psi, d'>/(w'-z2)],
        # d' = (H - E - w') xi_K' = i eps q_K' + delta_K', z1 = w_K + i eps, z2 = w_K - i eps.
        dprime = 1j * eps * q_in + self.truncation_defects
        a_plus = np.conj(-q_out) @ dprime.T
        a_minus = np.conj(-q_in) @ dprime.T
        dw = self.omega[None, :] - self.omega[:, None]
        inner = 1j * (a_plus / (dw - 1j * eps) - a_minus / (dw + 1j * eps))
        drift_defect = complex(-1j * np.sum(np.outer(w * np.conj(f), w * h) * inner))

        ident = abs(lhs_b - rhs - norm_defect - prop_defect - drift_defect)
        disc = abs(lhs - rhs)
        budget = quadrature_tol + abs(norm_defect) + abs(prop_defect) + abs(drift_defect)

        shared = self.radius_match()
        shared_rhs = complex(-1j * np.sum(coeff * t_eps * shared))
        delta = self.delta_form(f, h, t_eps) if g.width is not None else complex("nan")
        fnorm = math.sqrt(max(g.inner(f, f).real, 0.0))
        ratio = float(np.linalg.norm(in_fb) / fnorm) if fnorm > 0 else math.nan
        return SMatrixResult(float(eps), lhs, rhs, lhs_b, disc, norm_defect, prop_defect, drift_defect,
                             quad_err, ident, budget, delta, shared_rhs, ratio)

    def radius_match(self) -> np.ndarray:
        r = self.grid.radius
        return (r[:, None] == r[None, :]).astype(float)

    def delta_form(self, f, h, t_matrix) -> complex:
        """``-2 pi i sum_{shared shells} w w' / width conj(f) h T``: the
        Lorentzian replaced by its limit ``2 pi delta(omega - omega')`` on the
        radial quadrature."""
        g = self.grid
        w = g.weights
        coeff = np.outer(w * np.conj(f), w * h) / g.width[None, :]
        return complex(-2j * np.pi * np.sum(coeff * t_matrix * self.radius_match()))

    def s_matrix_sweep(self, f, h, epsilons, path="time", quadrature_tol=1e-6) -> list[SMatrixResult]:
        return [self.s_matrix(f, h, e, path, quadrature_tol) for e in sorted(epsilons, reverse=True)]

    def cross_check_paths(self, h, eps, direction="in") -> float:
        """Relative difference between the time and resolvent Cook vectors."""
        a = self.asymptotic_create(h, eps, direction, "time")
        b = self.asymptotic_create(h, eps, direction, "resolvent")
        return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
