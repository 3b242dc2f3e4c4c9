"""Finite-difference matter space: N particles (N <= 2) on a Dirichlet box in
d dimensions, optional spin 1/2.

Matter basis ordering is particle-major; each particle's factor is
``site (x) spin`` with sites in C order over the axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


class MatterError(ValueError):
    pass


@dataclass(frozen=True)
class ParticleGrid:
    dimension: int = 1
    points: int = 32
    extent: float = 8.0
    n_particles: int = 1
    spin: float = 0.0

    def __post_init__(self):
        if self.n_particles not in (1, 2):
            raise MatterError("only N=1 or N=2 particles are supported")
        if self.spin not in (0.0, 0.5):
            raise MatterError("spin must be 0 or 1/2")
        if self.points < 3 or self.extent <= 0:
            raise MatterError("need >= 3 points per axis and a positive extent")

    @property
    def spacing(self) -> float:
        return 2 * self.extent / (self.points + 1)

    @property
    def axis(self) -> np.ndarray:
        """Interior grid points; the Dirichlet nodes at +-extent are dropped."""
        return -self.extent + self.spacing * np.arange(1, self.points + 1)

    @property
    def n_sites(self) -> int:
        return self.points ** self.dimension

    @property
    def spin_dim(self) -> int:
        return int(round(2 * self.spin + 1))

    @property
    def particle_dim(self) -> int:
        return self.n_sites * self.spin_dim

    @property
    def dim(self) -> int:
        return self.particle_dim ** self.n_particles

    @cached_property
    def sites(self) -> np.ndarray:
        """(n_sites, d) coordinates in basis order."""
        mesh = np.meshgrid(*([self.axis] * self.dimension), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


def _second_difference(n, h):
    return sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h ** 2


def _first_difference(n, h):
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1]) / (2 * h)


def _along_axis(op1d, axis, d, n):
    mats = [sp.identity(n, format="csr")] * d
    mats[axis] = op1d
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


# --- potentials -------------------------------------------------------------

def _harmonic(x, strength=0.25):
    return strength * np.sum(x ** 2, axis=-1)


def _box(x, depth=0.0):
    return np.full(x.shape[:-1], float(depth))


def _double_well(x, a=0.05, b=2.0, shift=0.0):
    r2 = np.sum(x ** 2, axis=-1)
    return a * (r2 - b ** 2) ** 2 + shift


def _soft_coulomb(x, charge=1.0, softening=1.0):
    if x.shape[-1] != 1:
        raise MatterError("soft-Coulomb potential is one-dimensional")
    return -charge / np.sqrt(x[..., 0] ** 2 + softening ** 2)


POTENTIALS = {
    "harmonic": _harmonic,
    "box": _box,
    "double_well": _double_well,
    "double-well": _double_well,
    "soft_coulomb": _soft_coulomb,
    "soft-coulomb": _soft_coulomb,
}


def tabulated_potential(path):
    """Linear interpolation of a two-column ``x V`` text file (d=1)."""
    data = np.loadtxt(path, ndmin=2)
    xs, vs = data[:, 0], data[:, 1]

    def v(x):
        if x.shape[-1] != 1:
            raise MatterError("tabulated potentials are one-dimensional")
        return np.interp(x[..., 0], xs, vs)

    return v


def one_body_potential(name, params=None, path=None):
    params = dict(params or {})
    params.pop("pair_strength", None)
    params.pop("pair_softening", None)
    if name == "tabulated":
        if not path:
            raise MatterError("tabulated potential needs potential_file")
        return tabulated_potential(path)
    try:
        fn = POTENTIALS[name]
    except KeyError:
        raise MatterError(f"unknown potential {name!r}; choose from {sorted(POTENTIALS)} or tabulated")
    return lambda x: fn(x, **params)


class MatterSpace:
    """Operators on the matter Hilbert space for a given grid and potential.

    ``potential`` is a callable taking an (..., d) array of single-particle
    positions. For N=2 an optional soft pair repulsion
    ``pair_strength / sqrt(|x1-x2|^2 + pair_softening^2)`` is added.
    """

    def __init__(self, grid: ParticleGrid, potential=None, pair_strength=0.0, pair_softening=1.0):
        self.grid = grid
        self.one_body = potential if potential is not None else (lambda x: np.zeros(x.shape[:-1]))
        self.pair_strength = pair_strength
        self.pair_softening = pair_softening
        v = self.potential_values()
        if not np.all(np.isfinite(v)):
            raise MatterError("potential is not finite on the grid")

    @classmethod
    def from_config(cls, cfg) -> "MatterSpace":
        m, d = cfg.model, cfg.discretization
        grid = ParticleGrid(m.dimension, d.matter_points, d.matter_extent, m.particles, m.spin)
        params = dict(m.potential_params)
        pot = one_body_potential(m.potential, params, m.potential_file)
        return cls(grid, pot, params.get("pair_strength", 0.0), params.get("pair_softening", 1.0))

    @property
    def dim(self) -> int:
        return self.grid.dim

    # embedding helpers
    def _embed(self, single: sp.spmatrix, j: int) -> sp.csr_matrix:
        g = self.grid
        if not 0 <= j < g.n_particles:
            raise MatterError(f"particle index {j} out of range")
        eye = sp.identity(g.particle_dim, format="csr")
        mats = [eye] * g.n_particles
        mats[j] = sp.csr_matrix(single)
        out = mats[0]
        for m in mats[1:]:
            out = sp.kron(out, m, format="csr")
        return out.tocsr()

    def _site_op(self, op_sites: sp.spmatrix) -> sp.csr_matrix:
        return sp.kron(op_sites, sp.identity(self.grid.spin_dim), format="csr")

    def site_values(self, j: int, values) -> np.ndarray:
        """Diagonal of the multiplication by ``values[site]`` acting on particle ``j``."""
        g = self.grid
        per_particle = np.repeat(np.asarray(values), g.spin_dim)
        out = np.ones(1, dtype=np.asarray(values).dtype)
        for jj in range(g.n_particles):
            out = np.kron(out, per_particle if jj == j else np.ones(g.particle_dim))
        return out

    @lru_cache(maxsize=None)
    def laplacian(self, j: int = 0) -> sp.csr_matrix:
        g = self.grid
        lap = sum(_along_axis(_second_difference(g.points, g.spacing), a, g.dimension, g.points)
                  for a in range(g.dimension))
        return self._embed(self._site_op(lap), j)

    @lru_cache(maxsize=None)
    def momentum(self, j: int, axis: int) -> sp.csr_matrix:
        """``-i`` times the central first difference along ``axis``."""
        g = self.grid
        d1 = _along_axis(_first_difference(g.points, g.spacing), axis, g.dimension, g.points)
        return self._embed(self._site_op(-1j * d1), j)

    @lru_cache(maxsize=None)
    def spin(self, j: int, l: int) -> sp.csr_matrix:
        """``(S_j)_l = sigma_l / 2`` on particle ``j``; the zero map when s=0."""
        g = self.grid
        if g.spin_dim == 1:
            return sp.csr_matrix((self.dim, self.dim), dtype=complex)
        single = sp.kron(sp.identity(g.n_sites), PAULI[l] / 2, format="csr")
        return self._embed(single, j)

    def positions(self, j: int) -> np.ndarray:
        """(dim, d) coordinates of particle ``j`` for every matter basis index."""
        return np.column_stack([self.site_values(j, self.grid.sites[:, a])
                                for a in range(self.grid.dimension)])

    def potential_values(self) -> np.ndarray:
        g = self.grid
        one = np.asarray(self.one_body(g.sites), dtype=float)
        v = sum(self.site_values(j, one) for j in range(g.n_particles))
        if g.n_particles == 2 and self.pair_strength:
            diff = self.positions(0) - self.positions(1)
            v = v + self.pair_strength / np.sqrt(np.sum(diff ** 2, axis=1) + self.pair_softening ** 2)
        return np.asarray(v, dtype=float)

    def potential(self) -> sp.csr_matrix:
        return sp.diags(self.potential_values()).tocsr()

    def hamiltonian(self) -> sp.csr_matrix:
        """Atomic operator ``-Delta + V`` (all particles)."""
        lap = sum(self.laplacian(j) for j in range(self.grid.n_particles))
        return (-lap + self.potential()).tocsr()

    def exchange_defect(self, n_samples=200, rng=None) -> float:
        """max |V(x1,x2) - V(x2,x1)| over sampled site pairs (0 for N=1)."""
        g = self.grid
        if g.n_particles == 1:
            return 0.0
        rng = np.random.default_rng(rng)
        v = self.potential_values().reshape(g.particle_dim, g.particle_dim)
        a = rng.integers(0, g.particle_dim, n_samples)
        b = rng.integers(0, g.particle_dim, n_samples)
        return float(np.max(np.abs(v[a, b] - v[b, a])))

    def min_potential(self) -> float:
        return float(np.min(self.potential_values()))


def laplacian_apply(space: MatterSpace, psi, j=0):
    return space.laplacian(j) @ psi


def momentum_apply(space: MatterSpace, j, axis, psi):
    return space.momentum(j, axis) @ psi


def spin_apply(space: MatterSpace, j, l, psi):
    return space.spin(j, l) @ psi


def atomic_eigensystem(space: MatterSpace, count=1, dense_threshold=4000, tol=1e-12):
    """Lowest ``count`` eigenpairs of ``-Delta + V`` as (energies, vectors[:, i])."""
    h = space.hamiltonian()
    n = h.shape[0]
    if n <= dense_threshold:
        vals, vecs = np.linalg.eigh(h.toarray())
        return vals[:count], vecs[:, :count]
    try:
        vals, vecs = spla.eigsh(h, k=count, which="SA", tol=tol)
    except spla.ArpackNoConvergence as exc:
        raise MatterError(f"atomic eigensolver did not converge: {exc}") from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order]
