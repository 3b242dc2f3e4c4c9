"""Bosonic Fock space over a finite mode grid, truncated at a total photon number.

Basis states are occupation vectors ``n`` with ``sum(n) <= n_max``, graded by
total photon number and lexicographic inside each sector, so the vacuum has
index 0. Creating a photon out of the top sector gives zero.

Ladder conventions: with ``b_i`` the orthonormal-mode annihilator,

* ``a*(h) = sum_i sqrt(w_i) h_i b_i^dagger`` so ``[a(g), a*(h)] = sum_i w_i conj(g_i) h_i``;
* the pointwise ``a(k_i, lambda_i) = b_i / sqrt(w_i)`` so that
  ``a(h) = sum_i w_i conj(h_i) a(k_i, lambda_i)``.
"""

from __future__ import annotations

from functools import cached_property, lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp

from .operators import OperatorHandle


def _compositions(total: int, parts: int):
    """Occupation vectors of length ``parts`` summing to ``total``, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class FockBasis:
    """Occupation-number basis with a total photon cutoff."""

    def __init__(self, n_modes: int, n_max: int):
        if n_modes < 1 or n_max < 1:
            raise ValueError("need at least one mode and n_max >= 1")
        self.n_modes = n_modes
        self.n_max = n_max
        states = []
        for total in range(n_max + 1):
            states.extend(sorted(_compositions(total, n_modes)))
        self.states = np.array(states, dtype=int)
        self.states.setflags(write=False)
        self.index = {s: i for i, s in enumerate(states)}
        self.photon_number = self.states.sum(axis=1)
        assert len(states) == comb(n_modes + n_max, n_max)

    @property
    def dim(self) -> int:
        return len(self.states)

    def __len__(self):
        return self.dim

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v

    def basis_state(self, occupation) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index[tuple(occupation)]] = 1.0
        return v

    def dumps(self) -> str:
        return "\n".join(f"{i} " + " ".join(map(str, s)) for i, s in enumerate(self.states))

    @lru_cache(maxsize=None)
    def ladder(self, i: int) -> sp.csr_matrix:
        """Orthonormal-mode annihilator ``b_i`` (real CSR matrix)."""
        rows, cols, vals = [], [], []
        for col, occ in enumerate(self.states):
            if occ[i] > 0:
                lower = list(occ)
                lower[i] -= 1
                rows.append(self.index[tuple(lower)])
                cols.append(col)
                vals.append(np.sqrt(occ[i]))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def ladder_dagger(self, i: int) -> sp.csr_matrix:
        return self.ladder(i).T.tocsr()

    @cached_property
    def top_mask(self) -> np.ndarray:
        return self.photon_number == self.n_max

    def guard_mask(self, max_photons: int) -> np.ndarray:
        return self.photon_number <= max_photons


def _check_len(basis, weights, h):
    h = np.asarray(h, dtype=complex)
    if h.shape != (basis.n_modes,) or len(weights) != basis.n_modes:
        raise ValueError("photon function and weights must have one entry per mode")
    return h


def create(basis: FockBasis, weights, h) -> OperatorHandle:
    """``a*(h)`` on the truncated Fock space."""
    h = _check_len(basis, weights, h)
    m = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for i in range(basis.n_modes):
        if h[i] != 0:
            m = m + np.sqrt(weights[i]) * h[i] * basis.ladder_dagger(i)
    return OperatorHandle(m, ("a*",), truncated=True)


def annihilate(basis: FockBasis, weights, h) -> OperatorHandle:
    """``a(h)``, the adjoint of :func:`create` (antilinear in ``h``)."""
    h = _check_len(basis, weights, h)
    m = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for i in range(basis.n_modes):
        if h[i] != 0:
            m = m + np.sqrt(weights[i]) * np.conj(h[i]) * basis.ladder(i)
    return OperatorHandle(m, ("a",))


def mode_annihilate(basis: FockBasis, weights, i: int) -> OperatorHandle:
    """Pointwise ``a(k_i, lambda_i) = b_i / sqrt(w_i)``."""
    return OperatorHandle(basis.ladder(i) / np.sqrt(weights[i]), ("a(k)",))


def field(basis: FockBasis, weights, h) -> OperatorHandle:
    """``phi(h) = (a(h) + a*(h)) / sqrt(2)``."""
    return (annihilate(basis, weights, h) + create(basis, weights, h)) * (1 / np.sqrt(2))


def number_diagonal(basis: FockBasis) -> np.ndarray:
    return basis.photon_number.astype(float)


def hf_diagonal(basis: FockBasis, omega) -> np.ndarray:
    """Free field energy ``sum_i n_i omega_i`` per basis state."""
    return basis.states @ np.asarray(omega, dtype=float)


def number_apply(basis: FockBasis, psi) -> np.ndarray:
    return _apply_diag(number_diagonal(basis), psi)


def hf_apply(basis: FockBasis, omega, psi) -> np.ndarray:
    return _apply_diag(hf_diagonal(basis, omega), psi)


def _apply_diag(diag, psi):
    """Multiply the Fock factor of ``psi`` (Fock vector or matter x Fock vector)."""
    psi = np.asarray(psi)
    n = len(diag)
    if psi.shape[-1] == n and psi.ndim == 1:
        return diag * psi
    return (psi.reshape(-1, n) * diag[None, :]).reshape(psi.shape)
