"""Thin linear-operator wrapper shared by the Fock, matter and coupled layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class OperatorHandle:
    """A linear map on state vectors backed by a CSR matrix.

    ``apply`` and ``adjoint_apply`` are pure; the wrapped matrix is never
    mutated after construction, so a handle can be shared between threads.
    """

    matrix: sp.csr_matrix
    tags: tuple[str, ...] = ()
    truncated: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "matrix", sp.csr_matrix(self.matrix, dtype=complex))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def adjoint_apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix.conj().T @ v

    def adjoint(self) -> "OperatorHandle":
        return OperatorHandle(self.matrix.conj().T.tocsr(), self.tags, self.truncated)

    def to_sparse(self) -> sp.csr_matrix:
        return self.matrix

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        if isinstance(other, OperatorHandle):
            return OperatorHandle(
                (self.matrix @ other.matrix).tocsr(),
                self.tags + other.tags,
                self.truncated or other.truncated,
            )
        return self.apply(other)

    def __add__(self, other: "OperatorHandle") -> "OperatorHandle":
        return OperatorHandle(
            self.matrix + other.matrix, self.tags + other.tags, self.truncated or other.truncated
        )

    def __sub__(self, other: "OperatorHandle") -> "OperatorHandle":
        return OperatorHandle(
            self.matrix - other.matrix, self.tags + other.tags, self.truncated or other.truncated
        )

    def __mul__(self, c) -> "OperatorHandle":
        return OperatorHandle(self.matrix * c, self.tags, self.truncated)

    __rmul__ = __mul__


def hermiticity_defect(m) -> float:
    """Largest entry of ``|M - M^H|`` for a sparse or dense matrix."""
    if sp.issparse(m):
        diff = (m - m.conj().T).tocoo()
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
    m = np.asarray(m)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def commutator(a, b):
    return a @ b - b @ a


def dump_coo(matrix, path) -> None:
    """Write a sparse matrix as ``row col re im`` lines (0-based indices)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def load_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        shape = (int(header[2]), int(header[3]))
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape, dtype=complex)
    rows, cols = data[:, 0].astype(int), data[:, 1].astype(int)
    return sp.csr_matrix((data[:, 2] + 1j * data[:, 3], (rows, cols)), shape=shape)
