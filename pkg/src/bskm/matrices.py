"""Matrix storage and the row-level kernels shared by all solvers.

A ``MatrixStore`` is an immutable dense (row-major) or CSR matrix with the
squared Euclidean norm of every row cached at construction. On top of it sit
the minimum-norm least-squares solve used for block projections, the
minimum-norm reference solution, and extreme eigenvalues of Gram matrices of
row selections.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

DENSE = "dense-row-major"
CSR = "csr"

# Gram dimension above which the dense symmetric eigensolver is replaced by
# power/inverse iteration.
_DENSE_EIG_CUTOFF = 2000

# Entry budget below which a sparse matrix is densified for the reference solve.
_DENSIFY_LIMIT = 4_000_000


class InconsistentSystemError(RuntimeError):
    """The right-hand side is not (numerically) in the range of the matrix."""


@dataclass(frozen=True)
class SpectralSummary:
    """Extreme eigenvalues of a Gram matrix plus its numerical rank."""

    lambda_max: float
    lambda_min_pos: float  # smallest eigenvalue above the rank threshold
    rank: int


class MatrixStore:
    """Dense row-major or CSR matrix with cached squared row norms.

    Instances are read-only after construction and safe to share across
    threads. Build them with :meth:`from_dense`, :meth:`from_coo` or
    :meth:`from_csr_arrays`.
    """

    def __init__(self, payload, layout):
        if layout == DENSE:
            arr = np.ascontiguousarray(payload, dtype=np.float64)
            if arr.ndim != 2:
                raise ValueError("dense matrix must be 2-D")
            self._dense = arr
            self._sparse = None
            self.nrows, self.ncols = arr.shape
            self.row_sq_norms = np.einsum("ij,ij->i", arr, arr)
        elif layout == CSR:
            mat = payload.tocsr().astype(np.float64)
            mat.sum_duplicates()
            mat.sort_indices()
            mat.prune()
            self._dense = None
            self._sparse = mat
            self.nrows, self.ncols = mat.shape
            self.row_sq_norms = np.bincount(
                np.repeat(np.arange(self.nrows), np.diff(mat.indptr)),
                weights=mat.data**2,
                minlength=self.nrows,
            )
        else:
            raise ValueError(f"unknown layout {layout!r}")
        self.layout = layout
        self._validate()
        if self._dense is not None:
            self._dense.flags.writeable = False
        self.row_sq_norms.flags.writeable = False

    # -- constructors --------------------------------------------------

    @classmethod
    def from_dense(cls, values):
        return cls(np.asarray(values, dtype=np.float64), DENSE)

    @classmethod
    def from_coo(cls, rows, cols, values, shape):
        """Build a CSR store from coordinate triples; duplicates are summed."""
        coo = sp.coo_matrix((values, (rows, cols)), shape=shape, dtype=np.float64)
        return cls(coo, CSR)

    @classmethod
    def from_csr_arrays(cls, row_ptr, col_idx, values, shape):
        mat = sp.csr_matrix(
            (np.asarray(values, dtype=np.float64), np.asarray(col_idx), np.asarray(row_ptr)),
            shape=shape,
        )
        return cls(mat, CSR)

    # -- CSR field access (spec'd storage layout) -----------------------

    @property
    def row_ptr(self):
        self._require_csr()
        return self._sparse.indptr

    @property
    def col_idx(self):
        self._require_csr()
        return self._sparse.indices

    @property
    def values(self):
        if self.layout == DENSE:
            return self._dense
        return self._sparse.data

    def _require_csr(self):
        if self.layout != CSR:
            raise ValueError("row_ptr/col_idx are only defined for csr layout")

    def _validate(self):
        if self.layout == CSR:
            indptr = self._sparse.indptr
            indices = self._sparse.indices
            if indptr[0] != 0 or indptr[-1] != len(self._sparse.data):
                raise ValueError("corrupt CSR: bad row_ptr bounds")
            if np.any(np.diff(indptr) < 0):
                raise ValueError("corrupt CSR: row_ptr not nondecreasing")
            if len(indices) and (indices.min() < 0 or indices.max() >= self.ncols):
                raise ValueError("corrupt CSR: column index out of range")
            # strictly increasing within each row
            row_of = np.repeat(np.arange(self.nrows), np.diff(indptr))
            if len(indices) > 1:
                same_row = row_of[1:] == row_of[:-1]
                if np.any(same_row & (np.diff(indices) <= 0)):
                    raise ValueError("corrupt CSR: column indices not strictly increasing in a row")
        if not np.all(np.isfinite(self.row_sq_norms)):
            raise ValueError("matrix contains non-finite entries")

    # -- kernels ---------------------------------------------------------

    def matvec(self, x):
        """A @ x."""
        if self.layout == DENSE:
            return self._dense @ x
        return self._sparse @ x

    def take_rows(self, idx):
        """Copy the selected rows into a compact dense (len(idx), ncols) buffer."""
        idx = np.asarray(idx)
        if idx.size == 0:
            raise ValueError("empty row selection")
        if self.layout == DENSE:
            return self._dense[idx]
        return self._sparse[idx].toarray()

    def rows_matvec(self, idx, x):
        """(A[idx]) @ x without touching the other rows."""
        if self.layout == DENSE:
            return self._dense[idx] @ x
        return self._sparse[idx] @ x

    def add_scaled_row(self, x, i, c):
        """x += c * A_(i), exploiting sparsity of the row. Mutates x."""
        if self.layout == DENSE:
            x += c * self._dense[i]
        else:
            start, end = self._sparse.indptr[i], self._sparse.indptr[i + 1]
            x[self._sparse.indices[start:end]] += c * self._sparse.data[start:end]
        return x

    def toarray(self):
        if self.layout == DENSE:
            return self._dense
        return self._sparse.toarray()

    def scipy_csr(self):
        self._require_csr()
        return self._sparse

    @property
    def nnz(self):
        if self.layout == DENSE:
            return int(np.count_nonzero(self._dense))
        return self._sparse.nnz


def row_dot(A: MatrixStore, i, x):
    """Inner product of row i with x; touches only stored entries for CSR."""
    if not 0 <= i < A.nrows:
        raise IndexError(f"row index {i} out of range for {A.nrows} rows")
    x = np.asarray(x)
    if x.shape != (A.ncols,):
        raise ValueError(f"x has length {x.shape}, expected ({A.ncols},)")
    if A.layout == DENSE:
        return float(A.values[i] @ x)
    start, end = A.row_ptr[i], A.row_ptr[i + 1]
    return float(A.values[start:end] @ x[A.col_idx[start:end]])


def residual_entry(A: MatrixStore, b, x, i):
    """b_(i) - A_(i) @ x."""
    return float(b[i]) - row_dot(A, i, x)


def min_norm_least_squares(A_rows, r):
    """Minimum-Euclidean-norm d solving min ||A_rows @ d - r||_2.

    ``A_rows`` is a compact dense row buffer (see MatrixStore.take_rows). For
    the consistent block systems this package produces, A_rows @ d == r holds
    to rounding. Full-rank blocks take a Gram/Cholesky fast path whose result
    is verified against the block equations; anything that fails Cholesky or
    the verification falls back to the SVD solve, whose rank threshold is the
    max(rows,cols)*eps*sigma_max singular-value convention.
    """
    A_rows = np.asarray(A_rows, dtype=np.float64)
    if A_rows.ndim != 2 or A_rows.shape[0] == 0:
        raise ValueError("empty row selection")
    r = np.asarray(r, dtype=np.float64)
    k, n = A_rows.shape
    try:
        if k <= n:
            # wide: d = A^T (A A^T)^{-1} r lies in the row space, hence min-norm
            G = A_rows @ A_rows.T
            c = scipy.linalg.cho_factor(G, lower=True, check_finite=False)
            d = A_rows.T @ scipy.linalg.cho_solve(c, r, check_finite=False)
        else:
            # tall consistent: the unique solution via normal equations
            G = A_rows.T @ A_rows
            c = scipy.linalg.cho_factor(G, lower=True, check_finite=False)
            d = scipy.linalg.cho_solve(c, A_rows.T @ r, check_finite=False)
        gap = np.max(np.abs(A_rows @ d - r))
        if gap <= 1e-11 * (1.0 + np.max(np.abs(r))):
            return d
    except scipy.linalg.LinAlgError:
        pass
    d, *_ = np.linalg.lstsq(A_rows, r, rcond=None)
    return d


def _rank_threshold(lam_max, nrows, ncols):
    # eigenvalue-scale version of the sigma <= max(dim)*eps*sigma_max convention
    return lam_max * (max(nrows, ncols) * np.finfo(np.float64).eps) ** 2


def _power_iteration_max(G, tol=1e-13, max_iters=100_000):
    k = G.shape[0]
    v = np.ones(k) / np.sqrt(k)
    lam = 0.0
    for _ in range(max_iters):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam_new = float(v @ (G @ v))
        if abs(lam_new - lam) <= tol * max(lam_new, 1.0):
            return lam_new
        lam = lam_new
    return lam


def _inverse_iteration_min(G, tol=1e-13, max_iters=100_000):
    # Cholesky-based inverse iteration; requires G positive definite.
    c = scipy.linalg.cho_factor(G, check_finite=False)
    k = G.shape[0]
    v = np.ones(k) / np.sqrt(k)
    lam = np.inf
    for _ in range(max_iters):
        w = scipy.linalg.cho_solve(c, v, check_finite=False)
        v = w / np.linalg.norm(w)
        lam_new = float(v @ (G @ v))
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1.0):
            return lam_new
        lam = lam_new
    return lam


def gram_extreme_eigs(A_rows) -> SpectralSummary:
    """Largest and smallest-positive eigenvalue of (A_rows)^T (A_rows).

    The positive spectra of A^T A and A A^T coincide, so the smaller Gram is
    formed. Dense symmetric eigendecomposition up to Gram dimension 2000;
    power iteration (top) and Cholesky inverse iteration (bottom, assuming a
    definite Gram, with a dense fallback) above that.
    """
    A_rows = np.asarray(A_rows, dtype=np.float64)
    if A_rows.ndim != 2 or A_rows.shape[0] == 0:
        raise ValueError("empty row selection")
    k, n = A_rows.shape
    G = A_rows @ A_rows.T if k <= n else A_rows.T @ A_rows
    dim = G.shape[0]
    if dim <= _DENSE_EIG_CUTOFF:
        eigs = np.linalg.eigvalsh(G)
        lam_max = float(max(eigs[-1], 0.0))
        thresh = _rank_threshold(lam_max, k, n)
        positive = eigs[eigs > thresh]
        if positive.size == 0:
            raise ValueError("row selection has no positive spectrum")
        return SpectralSummary(lam_max, float(positive[0]), int(positive.size))
    lam_max = _power_iteration_max(G)
    thresh = _rank_threshold(lam_max, k, n)
    try:
        lam_min = _inverse_iteration_min(G)
        if lam_min > thresh:
            return SpectralSummary(lam_max, lam_min, dim)
    except scipy.linalg.LinAlgError:
        pass
    # singular Gram: no shortcut, fall back to the full decomposition
    eigs = np.linalg.eigvalsh(G)
    positive = eigs[eigs > thresh]
    if positive.size == 0:
        raise ValueError("row selection has no positive spectrum")
    return SpectralSummary(float(max(eigs[-1], lam_max)), float(positive[0]), int(positive.size))


def min_norm_solution(A: MatrixStore, b, consistency_tol=1e-10):
    """Minimum-norm solution of the consistent system A x = b.

    Direct SVD-based solve for dense (and small sparse) matrices; LSQR from
    the zero vector with one defect-correction pass otherwise. Raises
    InconsistentSystemError when the final relative residual exceeds
    ``consistency_tol``.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.nrows,):
        raise ValueError(f"b has shape {b.shape}, expected ({A.nrows},)")
    if A.layout == DENSE or A.nrows * A.ncols <= _DENSIFY_LIMIT:
        x, *_ = np.linalg.lstsq(A.toarray(), b, rcond=None)
    else:
        mat = A.scipy_csr()
        x = sp.linalg.lsqr(mat, b, atol=1e-14, btol=1e-14, conlim=0.0,
                           iter_lim=8 * (A.nrows + A.ncols))[0]
        # defect correction: one more LSQR pass on the residual
        resid = b - mat @ x
        x = x + sp.linalg.lsqr(mat, resid, atol=1e-14, btol=1e-14, conlim=0.0,
                               iter_lim=8 * (A.nrows + A.ncols))[0]
    bnorm = np.linalg.norm(b)
    rnorm = np.linalg.norm(b - A.matvec(x))
    if rnorm > consistency_tol * max(bnorm, 1e-300):
        raise InconsistentSystemError(
            f"system appears inconsistent: relative residual {rnorm / max(bnorm, 1e-300):.3e}"
        )
    return x


def row_space_basis(A: MatrixStore):
    """Orthonormal basis of the row space (columns of the returned array)."""
    arr = A.toarray()
    _, s, vt = np.linalg.svd(arr, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((A.ncols, 0))
    tol = max(A.nrows, A.ncols) * np.finfo(np.float64).eps * s[0]
    r = int(np.sum(s > tol))
    return vt[:r].T
