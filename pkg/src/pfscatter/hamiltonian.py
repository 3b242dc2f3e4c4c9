"""Truncated Pauli-Fierz Hamiltonian on matter (x) Fock, the current operator
D1(k, lambda) and the matter-space kernel D2(k, lambda, k', lambda').

Full-space index = ``matter_index * fock_dim + fock_index`` (``kron(matter, fock)``).

On the lattice the momentum stencil does not satisfy ``[p, e^{ik.x}] = k e^{ik.x}``,
so D1 is assembled in the symmetric form

    D1(k) = sum_j sum_l ( p_jl g_l(x_j) + g_l(x_j) p_jl + 2 g_l(x_j) A_l(x_j) )
            + mu sum_j S_j . g^B(x_j)

with ``g(x) = (2pi)^{-d/2} conj(kappa) eps e^{ik.x} / sqrt(2|k|)``. In the
continuum with ``k.eps = 0`` this equals ``2 g.(p + A) + mu S.g^B``; on the grid it
makes ``[H - H_f - V, a*(h)] = sum_i w_i h_i D1(k_i)`` an exact matrix identity
away from the photon cutoff.
"""

from __future__ import annotations

from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from . import fock as fk
from .matter import MatterSpace
from .modes import ModeGrid, build_grid
from .operators import OperatorHandle, commutator


class ModelSizeError(MemoryError):
    pass


COMPONENTS = ("kinetic", "a_linear", "a_quadratic", "spin_b", "potential", "field_energy")


class PauliFierzModel:
    def __init__(self, grid: ModeGrid, matter: MatterSpace, n_max: int, mu: float = 2.0,
                 memory_budget_mb: float = 2000.0):
        if matter.grid.dimension != grid.dimension:
            raise ValueError("matter and photon grids must share the dimension")
        self.grid = grid
        self.matter = matter
        self.mu = float(mu)
        self.fock = fk.FockBasis(grid.n_modes, n_max)
        self.dim_matter = matter.dim
        self.dim_fock = self.fock.dim
        self.dim = self.dim_matter * self.dim_fock
        self.spin_enabled = matter.grid.spin_dim > 1
        est = self.estimated_megabytes()
        if est > memory_budget_mb:
            raise ModelSizeError(
                f"model needs ~{est:.0f} MB (dim {self.dim}: matter {self.dim_matter} x "
                f"Fock {self.dim_fock}), over the {memory_budget_mb:g} MB budget")
        self._eye_f = sp.identity(self.dim_fock, format="csr")
        self._eye_m = sp.identity(self.dim_matter, format="csr")

    @classmethod
    def from_config(cls, cfg) -> "PauliFierzModel":
        return cls(build_grid(cfg), MatterSpace.from_config(cfg), cfg.discretization.n_max,
                   cfg.model.mu, cfg.solver.memory_budget_mb)

    def estimated_megabytes(self) -> float:
        d = self.grid.dimension
        m = self.grid.n_modes
        per_row = (2 * d + 1) + 2 * m * (2 * d + 1) + (2 * m + 1) ** 2
        return self.dim * per_row * 16 * 3 / 2 ** 20

    # ------------------------------------------------------------------ lifts
    def lift_matter(self, op) -> sp.csr_matrix:
        return sp.kron(op, self._eye_f, format="csr")

    def lift_fock(self, op) -> sp.csr_matrix:
        return sp.kron(self._eye_m, op, format="csr")

    def _mult(self, values) -> sp.csr_matrix:
        return sp.diags(np.asarray(values, dtype=complex)).tocsr()

    @cached_property
    def photon_numbers(self) -> np.ndarray:
        return np.tile(self.fock.photon_number, self.dim_matter)

    def product_state(self, phi, eta=None) -> np.ndarray:
        eta = self.fock.vacuum() if eta is None else np.asarray(eta, dtype=complex)
        return np.kron(np.asarray(phi, dtype=complex), eta)

    def sector_weights(self, psi) -> np.ndarray:
        w = np.abs(np.asarray(psi)) ** 2
        return np.bincount(self.photon_numbers, weights=w, minlength=self.fock.n_max + 1)

    def top_sector_weight(self, psi) -> float:
        return float(self.sector_weights(psi)[-1])

    def random_guarded_state(self, rng, max_photons: int) -> np.ndarray:
        """Random unit vector supported on photon numbers <= ``max_photons``."""
        rng = np.random.default_rng(rng)
        v = rng.normal(size=self.dim) + 1j * rng.normal(size=self.dim)
        v[self.photon_numbers > max_photons] = 0
        return v / np.linalg.norm(v)

    # ------------------------------------------------------ mode densities
    def _phase(self, k, j) -> np.ndarray:
        return np.exp(1j * (self.matter.positions(j) @ np.asarray(k, dtype=float)))

    def current_density(self, k, eps, kappa, j: int) -> np.ndarray:
        """(dim_matter, d) values of ``(2pi)^{-d/2} conj(kappa) eps e^{ik.x_j} / sqrt(2|k|)``."""
        k = np.asarray(k, dtype=float)
        d = k.size
        nk = np.linalg.norm(k)
        if nk == 0:
            raise ValueError("zero momentum is excluded")
        pref = (2 * np.pi) ** (-d / 2) * np.conj(kappa) / np.sqrt(2 * nk)
        return pref * self._phase(k, j)[:, None] * np.asarray(eps, dtype=float)[None, :]

    def magnetic_density(self, k, eps, kappa, j: int) -> np.ndarray:
        """(dim_matter, 3) values of ``(2pi)^{-3/2} conj(kappa) (ik x eps) e^{ik.x_j} / sqrt(2|k|)``."""
        k = np.asarray(k, dtype=float)
        if k.size != 3:
            return np.zeros((self.dim_matter, k.size), dtype=complex)
        pref = (2 * np.pi) ** (-1.5) * np.conj(kappa) / np.sqrt(2 * np.linalg.norm(k))
        curl = np.cross(1j * k, np.asarray(eps, dtype=float))
        return pref * self._phase(k, j)[:, None] * curl[None, :]

    def _mode_density(self, i, j, magnetic=False):
        g = self.grid
        fn = self.magnetic_density if magnetic else self.current_density
        return fn(g.k[i], g.eps[i], g.kappa[i], j)

    # ------------------------------------------------------------- fields
    def _field(self, l: int, j: int, magnetic: bool) -> sp.csr_matrix:
        w = self.grid.weights
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for i in range(self.grid.n_modes):
            u = np.sqrt(w[i]) * self._mode_density(i, j, magnetic)[:, l]
            if not np.any(u):
                continue
            b = self.fock.ladder(i)
            out = out + sp.kron(self._mult(u), b) + sp.kron(self._mult(np.conj(u)), b.T)
        return out.tocsr()

    @lru_cache(maxsize=None)
    def vector_potential(self, l: int, j: int = 0) -> sp.csr_matrix:
        """``A_l(x_j) = phi(G_{x_j, l})`` on the full space."""
        return self._field(l, j, magnetic=False)

    @lru_cache(maxsize=None)
    def magnetic_field(self, l: int, j: int = 0) -> sp.csr_matrix:
        """``B_l(x_j) = phi(H_{x_j, l})``; zero for d < 3."""
        if self.grid.dimension != 3:
            return sp.csr_matrix((self.dim, self.dim), dtype=complex)
        return self._field(l, j, magnetic=True)

    # -------------------------------------------------------- Hamiltonian
    @cached_property
    def components(self) -> dict[str, sp.csr_matrix]:
        m = self.matter
        d = self.grid.dimension
        n_part = m.grid.n_particles
        zero = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        kin = self.lift_matter(-sum(m.laplacian(j) for j in range(n_part)))
        lin, quad, spin = zero, zero, zero
        for j in range(n_part):
            for l in range(d):
                a = self.vector_potential(l, j)
                p = self.lift_matter(m.momentum(j, l))
                lin = lin + p @ a + a @ p
                quad = quad + a @ a
            if self.spin_enabled:
                for l in range(3):
                    spin = spin + self.mu * (self.lift_matter(m.spin(j, l)) @ self.magnetic_field(l, j))
        hf = fk.hf_diagonal(self.fock, self.grid.omega)
        return {
            "kinetic": kin.tocsr(),
            "a_linear": lin.tocsr(),
            "a_quadratic": quad.tocsr(),
            "spin_b": spin.tocsr(),
            "potential": self.lift_matter(m.potential()),
            "field_energy": self.lift_fock(sp.diags(hf)),
        }

    @cached_property
    def hamiltonian(self) -> sp.csr_matrix:
        c = self.components
        return sum(c[name] for name in COMPONENTS).tocsr()

    @cached_property
    def interaction_part(self) -> sp.csr_matrix:
        """``sum_j (p_j + A(x_j))^2 + mu S_j . B(x_j)`` (everything but V and H_f)."""
        c = self.components
        return (c["kinetic"] + c["a_linear"] + c["a_quadratic"] + c["spin_b"]).tocsr()

    def operator(self) -> OperatorHandle:
        return OperatorHandle(self.hamiltonian, COMPONENTS, truncated=True)

    @cached_property
    def potential_negative_part(self) -> np.ndarray:
        """Diagonal of ``V_- (x) 1`` on the full space."""
        return np.repeat(np.maximum(0.0, -self.matter.potential_values()), self.dim_fock)

    # ------------------------------------------------------ ladder operators
    def create(self, h) -> sp.csr_matrix:
        return self.lift_fock(fk.create(self.fock, self.grid.weights, self.grid.check_photon_function(h)).matrix)

    def annihilate(self, h) -> sp.csr_matrix:
        return self.lift_fock(fk.annihilate(self.fock, self.grid.weights, self.grid.check_photon_function(h)).matrix)

    @lru_cache(maxsize=None)
    def mode_annihilate(self, i: int) -> sp.csr_matrix:
        return self.lift_fock(fk.mode_annihilate(self.fock, self.grid.weights, i).matrix)

    # ------------------------------------------------------------ D1, D2
    def d1_operator(self, k, eps, kappa) -> sp.csr_matrix:
        """D1 for an arbitrary momentum/polarization (not necessarily a grid mode)."""
        m = self.matter
        d = self.grid.dimension
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for j in range(m.grid.n_particles):
            g = self.current_density(k, eps, kappa, j)
            for l in range(d):
                if not np.any(g[:, l]):
                    continue
                gl = self._mult(g[:, l])
                p = m.momentum(j, l)
                out = out + self.lift_matter(p @ gl + gl @ p)
                out = out + 2 * (self.lift_matter(gl) @ self.vector_potential(l, j))
            if self.spin_enabled:
                gb = self.magnetic_density(k, eps, kappa, j)
                for l in range(3):
                    out = out + self.mu * self.lift_matter(m.spin(j, l) @ self._mult(gb[:, l]))
        return out.tocsr()

    @lru_cache(maxsize=None)
    def d1(self, i: int) -> sp.csr_matrix:
        g = self.grid
        if g.omega[i] == 0:
            raise ValueError("D1 undefined at zero momentum")
        return self.d1_operator(g.k[i], g.eps[i], g.kappa[i])

    @lru_cache(maxsize=None)
    def d1_adjoint(self, i: int) -> sp.csr_matrix:
        return self.d1(i).conj().T.tocsr()

    def d1_apply(self, i: int, psi) -> np.ndarray:
        return self.d1(i) @ psi

    def d2_values(self, k, eps, kappa, k2, eps2, kappa2) -> np.ndarray:
        """Matter-space multiplication function D2(k, eps; k2, eps2)."""
        k, k2 = np.asarray(k, dtype=float), np.asarray(k2, dtype=float)
        d = k.size
        pref = 2 / (2 * np.pi) ** d * np.conj(kappa) * kappa2 * float(np.dot(eps, eps2))
        pref /= np.sqrt(2 * np.linalg.norm(k)) * np.sqrt(2 * np.linalg.norm(k2))
        out = np.zeros(self.dim_matter, dtype=complex)
        for j in range(self.matter.grid.n_particles):
            out += np.exp(1j * (self.matter.positions(j) @ (k - k2)))
        return pref * out

    def d2(self, i: int, i2: int) -> np.ndarray:
        g = self.grid
        return self.d2_values(g.k[i], g.eps[i], g.kappa[i], g.k[i2], g.eps[i2], g.kappa[i2])

    def d2_operator(self, i: int, i2: int) -> sp.csr_matrix:
        return self.lift_matter(self._mult(self.d2(i, i2)))

    # --------------------------------------------------------- verifiers
    def ccr_residuals(self, g, h, psi) -> dict[str, float]:
        """Norms of ``([a(g),a*(h)] - <g,h>) psi``, ``[a(g),a(h)] psi`` and
        ``[a*(g),a*(h)] psi``. Exact for photon number <= n_max - 1 (the last
        one needs <= n_max - 2)."""
        ag, ah = self.annihilate(g), self.annihilate(h)
        cg, ch = self.create(g), self.create(h)
        ip = self.grid.inner(g, h)
        return {
            "a_astar": float(np.linalg.norm(commutator(ag, ch) @ psi - ip * psi)),
            "a_a": float(np.linalg.norm(commutator(ag, ah) @ psi)),
            "astar_astar": float(np.linalg.norm(commutator(cg, ch) @ psi)),
        }

    def d1_smeared(self, h) -> sp.csr_matrix:
        w = self.grid.weights
        return sum(w[i] * h[i] * self.d1(i) for i in range(self.grid.n_modes) if h[i] != 0)

    def comm1_residual(self, h, psi) -> float:
        """``|| ([H_int, a*(h)] - sum_i w_i h_i D1(k_i)) psi ||``."""
        h = self.grid.check_photon_function(h)
        c = self.create(h)
        hint = self.interaction_part
        lhs = hint @ (c @ psi) - c @ (hint @ psi)
        rhs = self.d1_smeared(h) @ psi if np.any(h) else 0 * psi
        return float(np.linalg.norm(lhs - rhs))

    def comm2_vector(self, h, i: int, psi) -> np.ndarray:
        """``([a(h), D1(k_i)] - sum_i' w_i' conj(h_i') D2(k_i, k_i')) psi``."""
        h = self.grid.check_photon_function(h)
        a = self.annihilate(h)
        d1 = self.d1(i)
        lhs = a @ (d1 @ psi) - d1 @ (a @ psi)
        w = self.grid.weights
        kern = sum(w[i2] * np.conj(h[i2]) * self.d2(i, i2) for i2 in range(self.grid.n_modes))
        rhs = np.repeat(kern, self.dim_fock) * psi
        return lhs - rhs

    def comm2_residual(self, h, i: int, psi) -> float:
        return float(np.linalg.norm(self.comm2_vector(h, i, psi)))
