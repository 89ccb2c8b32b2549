"""Sparse storage and direct solution of the nonsymmetric saddle-point system.

Factorization is delegated to SuperLU (scipy.sparse.linalg.splu); the
saddle-point blocks are nonsymmetric and indefinite, which rules out plain
CG, and a pivoted direct factorization is robust at the problem sizes this
code targets (up to a few times 1e5 unknowns).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse
import scipy.sparse.linalg

from .mixed_fem import AssembledSystem, MixedSolution

RESIDUAL_TOL = 1e-10


class SolveError(Exception):
    """Factorization failure or unacceptable residual."""


class SparseMatrix:
    """Compressed sparse row matrix (sorted, duplicate-free columns per row)."""

    def __init__(self, csr: scipy.sparse.csr_matrix):
        csr = csr.tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        self._m = csr

    @classmethod
    def from_triplets(cls, rows, cols, vals, shape):
        coo = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=shape)
        return cls(coo.tocsr())

    @classmethod
    def identity(cls, n):
        return cls(scipy.sparse.identity(n, format="csr"))

    @property
    def indptr(self):
        return self._m.indptr

    @property
    def indices(self):
        return self._m.indices

    @property
    def data(self):
        return self._m.data

    @property
    def shape(self):
        return self._m.shape

    @property
    def nnz(self):
        return self._m.nnz

    def to_scipy(self):
        return self._m

    def dense(self):
        return self._m.toarray()


def spmv(matrix: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product."""
    x = np.asarray(x, dtype=float)
    if x.shape != (matrix.shape[1],):
        raise ValueError(
            f"dimension mismatch: matrix {matrix.shape} with vector {x.shape}"
        )
    return matrix.to_scipy() @ x


@dataclass(frozen=True)
class SolveReport:
    residual: float
    n: int
    nnz_matrix: int
    nnz_factors: int
    seconds: float


def solve(system: AssembledSystem) -> tuple[MixedSolution, SolveReport]:
    """Direct sparse LU solve; raises SolveError on failure or bad residual."""
    t0 = time.perf_counter()
    m = system.matrix.to_scipy()
    if m.shape[0] != m.shape[1]:
        raise SolveError(f"system not square: {m.shape}")
    try:
        lu = scipy.sparse.linalg.splu(m.tocsc())
        x = lu.solve(system.rhs)
    except RuntimeError as exc:  # SuperLU signals singular pivots this way
        raise SolveError(f"factorization failed: {exc}") from exc
    if not np.isfinite(x).all():
        raise SolveError("factorization produced non-finite values")
    bnorm = float(np.linalg.norm(system.rhs))
    rnorm = float(np.linalg.norm(m @ x - system.rhs))
    residual = rnorm / bnorm if bnorm > 0 else rnorm
    if residual > RESIDUAL_TOL:
        raise SolveError(f"relative residual {residual:.3e} above {RESIDUAL_TOL:.0e}")
    report = SolveReport(
        residual=residual,
        n=m.shape[0],
        nnz_matrix=m.nnz,
        nnz_factors=int(lu.nnz),
        seconds=time.perf_counter() - t0,
    )
    solution = MixedSolution(u_coeffs=x[: system.n_u], p_vals=x[system.n_u:])
    return solution, report


def write_matrix_market(matrix: SparseMatrix, path, comment=""):
    """Dump in MatrixMarket coordinate format for external validation."""
    scipy.io.mmwrite(path, matrix.to_scipy().tocoo(), comment=comment)
