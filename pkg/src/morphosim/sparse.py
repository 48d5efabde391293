"""Sparse symmetric assembly and direct solvers.

Matrices are accumulated as triplets, compressed to the lower triangle in
CSR form, and solved either by a banded Cholesky factorisation after
reverse Cuthill-McKee reordering (SPD case) or by sparse LU with
iterative refinement (symmetric indefinite case).
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .errors import AssemblyError, NotSPDError, SingularSystemError


class TripletAccumulator:
    """Growable list of ``(row, col, value)`` entries for an ``n x n`` matrix."""

    def __init__(self, n):
        self.n = int(n)
        self._rows, self._cols, self._vals = [], [], []

    def add(self, row, col, value):
        self.add_block(np.atleast_1d(row), np.atleast_1d(col), np.atleast_1d(value))

    def add_block(self, rows, cols, values):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (len(rows) == len(cols) == len(values)):
            raise AssemblyError("rows, cols and values differ in length")
        if len(rows) and (rows.min() < 0 or cols.min() < 0 or rows.max() >= self.n or cols.max() >= self.n):
            raise AssemblyError(f"entry index out of range for dimension {self.n}")
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(values)

    def arrays(self):
        if not self._rows:
            return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
        return np.concatenate(self._rows), np.concatenate(self._cols), np.concatenate(self._vals)


class SparseSymmetric:
    """Symmetric matrix stored as its lower triangle (CSR, sorted indices)."""

    def __init__(self, lower):
        lower = sparse.csr_matrix(lower)
        lower.sum_duplicates()
        lower.sort_indices()
        self.lower = lower
        self.n = lower.shape[0]

    def full(self):
        strict = sparse.tril(self.lower, k=-1)
        return (self.lower + strict.T).tocsr()

    def __matmul__(self, x):
        return self.full() @ x

    def __getitem__(self, ij):
        i, j = ij
        if i < j:
            i, j = j, i
        return float(self.lower[i, j])

    def toarray(self):
        return self.full().toarray()


def compress(acc, tol=1e-12):
    """Sum duplicates and keep the lower triangle.

    Strict upper-triangle entries are allowed only as a consistent mirror of
    the lower triangle (full-matrix assembly); otherwise an
    :class:`AssemblyError` is raised.
    """
    rows, cols, vals = acc.arrays()
    n = acc.n
    lo = rows >= cols
    lower = sparse.coo_matrix((vals[lo], (rows[lo], cols[lo])), shape=(n, n)).tocsr()
    up = ~lo
    if np.any(up):
        mirror = sparse.coo_matrix((vals[up], (cols[up], rows[up])), shape=(n, n)).tocsr()
        strict = sparse.tril(lower, k=-1).tocsr()
        diff = abs(mirror - strict)
        scale = max(abs(lower).max() if lower.nnz else 0.0, 1e-300)
        if diff.nnz and diff.max() > tol * scale:
            raise AssemblyError("upper-triangle entries do not mirror the lower triangle")
    return SparseSymmetric(lower)


def _as_full(A):
    return A.full() if isinstance(A, SparseSymmetric) else sparse.csr_matrix(A)


def solve_spd(A, b, rtol=1e-10):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Reverse Cuthill-McKee reordering followed by LAPACK banded Cholesky.
    """
    M = _as_full(A)
    b = np.asarray(b, dtype=float)
    n = M.shape[0]
    if n == 0:
        return np.zeros(0)
    perm = csgraph.reverse_cuthill_mckee(M, symmetric_mode=True)
    P = M[perm][:, perm].tocoo()
    keep = P.row >= P.col
    r, c, v = P.row[keep], P.col[keep], P.data[keep]
    bw = int(np.max(r - c)) if len(r) else 0
    band = np.zeros((bw + 1, n))
    np.add.at(band, (r - c, c), v)
    try:
        factor = scipy.linalg.cholesky_banded(band, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"matrix is not positive definite ({exc})") from None
    y = scipy.linalg.cho_solve_banded((factor, True), b[perm], check_finite=False)
    x = np.empty_like(y)
    x[perm] = y
    res = np.linalg.norm(M @ x - b)
    if not np.isfinite(res) or res > rtol * np.linalg.norm(b):
        raise NotSPDError(f"Cholesky solve inaccurate (residual {res:.3g}); matrix is numerically not SPD")
    return x


def _lu_solve(M, b, bnorm, refinement_steps, **opts):
    try:
        lu = spla.splu(M, **opts)
    except RuntimeError as exc:
        raise SingularSystemError(f"factorisation failed: {exc}") from None
    x = lu.solve(b)
    for _ in range(refinement_steps):
        r = b - M @ x
        if not np.all(np.isfinite(r)) or np.linalg.norm(r) <= 1e-14 * bnorm:
            break
        x = x + lu.solve(r)
    return x, np.linalg.norm(M @ x - b)


def solve_symmetric_indefinite(K, b, rtol=1e-8, refinement_steps=3):
    """Solve a nonsingular symmetric (possibly indefinite) system.

    Sparse LU in symmetric mode (minimum-degree ordering on ``A + A^T``,
    diagonal pivots preferred) with iterative refinement.  If that fails to
    reach ``rtol`` the matrix is refactored with full partial pivoting;
    :class:`SingularSystemError` is raised when both attempts fail.
    """
    M = _as_full(K).tocsc()
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if M.shape[0] == 0:
        return np.zeros(0)
    attempts = (
        dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=1e-6, options=dict(SymmetricMode=True)),
        dict(permc_spec="COLAMD", diag_pivot_thresh=1.0),
    )
    res = np.inf
    for opts in attempts:
        try:
            x, res = _lu_solve(M, b, bnorm, refinement_steps, **opts)
        except SingularSystemError:
            continue
        if np.isfinite(res) and res <= rtol * bnorm:
            return x
    raise SingularSystemError(
        f"system singular to working precision (relative residual {res / max(bnorm, 1e-300):.3g})"
    )
