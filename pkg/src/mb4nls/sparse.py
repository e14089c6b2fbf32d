"""Sparse factorization services for the real-split stage systems.

Numeric LU is SuperLU (through scipy) with threshold partial pivoting.  The
fill-reducing ordering is computed here: a geometric nested dissection of the
periodic grid, expanded so that all unknowns belonging to one grid point stay
adjacent.  Matrices without grid structure fall back to reverse Cuthill-McKee.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee

PIVOT_THRESHOLD = 0.1


class SingularMatrixError(ArithmeticError):
    pass


class ComplexEigenvalueError(ValueError):
    pass


def as_csr(a) -> sp.csr_matrix:
    """Canonical CSR: sorted column indices, no duplicates."""
    a = sp.csr_matrix(a, dtype=float)
    a.sum_duplicates()
    a.sort_indices()
    return a


@lru_cache(maxsize=16)
def grid_nested_dissection(nx: int, ny: int, leaf: int = 8) -> np.ndarray:
    """Fill-reducing elimination order of the points of a periodic nx-by-ny grid.

    Row 0 and column 0 are ordered last; removing them leaves a plain
    (nx-1)-by-(ny-1) rectangle (every wraparound edge touches them), which is
    bisected recursively with the separator line ordered after both halves.
    """
    ids = np.arange(nx * ny).reshape(ny, nx)
    out: list[np.ndarray] = []

    def rec(i0, i1, j0, j1):
        if i1 <= i0 or j1 <= j0:
            return
        if (i1 - i0) * (j1 - j0) <= leaf * leaf:
            out.append(ids[j0:j1, i0:i1].ravel())
            return
        if i1 - i0 >= j1 - j0:
            m = (i0 + i1) // 2
            rec(i0, m, j0, j1)
            rec(m + 1, i1, j0, j1)
            out.append(ids[j0:j1, m])
        else:
            m = (j0 + j1) // 2
            rec(i0, i1, j0, m)
            rec(i0, i1, m + 1, j1)
            out.append(ids[m, i0:i1])

    rec(1, nx, 1, ny)
    out.append(ids[0, :])
    out.append(ids[1:, 0])
    order = np.concatenate(out)
    order.flags.writeable = False
    return order


def interleave(order: np.ndarray, blocks: int) -> np.ndarray:
    """Expand a point ordering to ``blocks`` stacked copies of the unknowns.

    Unknown ``b * n + k`` (block ``b`` of point ``k``) follows the point order,
    with the ``blocks`` unknowns of each point kept contiguous.
    """
    n = len(order)
    return (order[:, None] + n * np.arange(blocks)[None, :]).ravel()


def rcm_ordering(a) -> np.ndarray:
    return np.asarray(reverse_cuthill_mckee(as_csr(a), symmetric_mode=True), dtype=np.int64)


class Factorization:
    """LU of P A P^T with a fixed symmetric permutation P.

    Immutable after construction; ``solve`` may be called from several
    threads.
    """

    def __init__(self, a, perm=None, pivot_threshold: float = PIVOT_THRESHOLD):
        a = sp.csc_matrix(a, dtype=float)
        n, m = a.shape
        if n != m:
            raise ValueError(f"matrix must be square, got {a.shape}")
        self.n = n
        self.perm = rcm_ordering(a) if perm is None else np.asarray(perm, dtype=np.int64)
        if self.perm.shape != (n,):
            raise ValueError("permutation length does not match matrix dimension")
        inv = np.empty(n, dtype=np.int64)
        inv[self.perm] = np.arange(n)
        coo = a.tocoo()
        pa = sp.csc_matrix((coo.data, (inv[coo.row], inv[coo.col])), shape=(n, n))
        try:
            self._lu = spla.splu(
                pa,
                permc_spec="NATURAL",
                diag_pivot_thresh=pivot_threshold,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        self.fill = self._lu.L.nnz + self._lu.U.nnz

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b; ``b`` may be (n,) or (n, k)."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"rhs has {b.shape[0]} rows, factorization is {self.n}x{self.n}")
        y = self._lu.solve(np.ascontiguousarray(b[self.perm]))
        x = np.empty_like(y)
        x[self.perm] = y
        return x


class IterativeSolver:
    """Restarted GMRES preconditioned by an incomplete LU, same interface as Factorization."""

    def __init__(self, a, perm=None, tol: float = 1e-12, restart: int = 50, maxiter: int = 200):
        self.a = sp.csc_matrix(a, dtype=float)
        self.n = self.a.shape[0]
        self.tol = tol
        self.restart = restart
        self.maxiter = maxiter
        # zero drop tolerance with unit fill keeps the level-0 pattern
        ilu = spla.spilu(self.a, drop_tol=0.0, fill_factor=1.0)
        self._m = spla.LinearOperator(self.a.shape, ilu.solve)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"rhs has {b.shape[0]} rows, system is {self.n}x{self.n}")
        if b.ndim == 2:
            return np.column_stack([self.solve(b[:, k]) for k in range(b.shape[1])])
        if not np.any(b):
            return np.zeros_like(b)
        x, info = spla.gmres(self.a, b, M=self._m, rtol=self.tol, atol=0.0,
                             restart=self.restart, maxiter=self.maxiter)
        if info != 0:
            raise ArithmeticError(f"GMRES did not converge (info={info})")
        return x


def sparse_lu(a, perm=None) -> Factorization:
    return Factorization(a, perm)


def solve(f, b: np.ndarray) -> np.ndarray:
    return f.solve(b)


def factorize(a, perm=None, method: str = "direct"):
    if method == "direct":
        return Factorization(a, perm)
    if method == "gmres":
        return IterativeSolver(a, perm)
    raise ValueError(f"unknown linear solver {method!r}")


def write_matrix_market(path, a) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(a), precision=17)


def eig3_real(e: np.ndarray, rtol: float = 1e-12):
    """Real eigendecomposition E = T diag(lam) T^-1 of a 3x3 matrix.

    Eigenvalues are returned ascending.  Columns of T have unit 2-norm and a
    positive largest-magnitude entry.  Raises ComplexEigenvalueError when E has
    a complex pair and ValueError when eigenvalues are not separated.
    """
    e = np.asarray(e, dtype=float)
    if e.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    scale = np.abs(e).sum(axis=1).max()
    lam, t = np.linalg.eig(e)
    if np.max(np.abs(lam.imag)) > rtol * scale:
        raise ComplexEigenvalueError(f"complex eigenvalues {lam}")
    lam = lam.real
    t = t.real
    idx = np.argsort(lam)
    lam = lam[idx]
    t = t[:, idx]
    if np.min(np.diff(lam)) <= rtol * max(scale, 1.0):
        raise ValueError(f"eigenvalues not separated: {lam}")
    for k in range(3):
        col = t[:, k] / np.linalg.norm(t[:, k])
        if col[np.argmax(np.abs(col))] < 0:
            col = -col
        t[:, k] = col
    t_inv = np.linalg.inv(t)
    resid = np.abs(e @ t - t * lam).max()
    if resid > 1e-12 * scale:
        raise ArithmeticError(f"eigendecomposition residual {resid:.3e}")
    return lam, t, t_inv
