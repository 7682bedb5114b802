"""Linear algebra behind every solver: assembly, banded/sparse/dense direct
solves, Jacobi-preconditioned Krylov iterations.

Every solve is checked a posteriori by its residual and raises instead of
returning an inaccurate answer.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from src.errors import (
    ConvergenceError,
    NotPositiveDefiniteError,
    SingularMatrixError,
    SolverError,
)

logger = logging.getLogger(__name__)

DIRECT_RESIDUAL_FACTOR = 1e-10
DENSE_RESIDUAL_FACTOR = 1e-8
DEFAULT_DENSE_CAP = 20000


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances shared by the solvers.

    Attributes:
        tol: Relative residual target of the iterative solvers
        max_iter: Iteration cap per Krylov solve
        dense_cap: Largest dense SPD system accepted
        restarts: Krylov restarts used to tighten a drifting residual
    """

    tol: float = 1e-10
    max_iter: int = 10000
    dense_cap: int = DEFAULT_DENSE_CAP
    restarts: int = 3


def assemble_csr(
    rows: np.ndarray, cols: np.ndarray, values: np.ndarray, n: int
) -> sp.csr_matrix:
    """
    Build a square CSR matrix from triplets, summing duplicates.

    Returns:
        Matrix with sorted column indices and no duplicate entries

    Raises:
        SolverError: Non-finite values
    """
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise SolverError("Non-finite entries in assembled matrix", stage="assembly")
    matrix = sp.coo_matrix((values, (rows, cols)), shape=(n, n)).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def _residual_bound(
    matrix: sp.spmatrix | np.ndarray, x: np.ndarray, rhs: np.ndarray, factor: float
) -> tuple[float, float]:
    if sp.issparse(matrix):
        norm_a = float(abs(matrix).sum(axis=1).max()) if matrix.shape[0] else 0.0
    else:
        norm_a = float(np.abs(matrix).sum(axis=1).max()) if matrix.shape[0] else 0.0
    residual = float(np.max(np.abs(matrix @ x - rhs), initial=0.0))
    bound = factor * (
        norm_a * float(np.max(np.abs(x), initial=0.0))
        + float(np.max(np.abs(rhs), initial=0.0))
    )
    return residual, bound


def _check_direct(matrix, x, rhs, factor, label) -> float:
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError(f"{label}: non-finite solution", stage="linalg")
    residual, bound = _residual_bound(matrix, x, rhs, factor)
    if residual > bound:
        raise SolverError(
            f"{label}: residual {residual:.3e} exceeds {bound:.3e}",
            stage="linalg",
            residual=residual,
        )
    return residual


def bandwidth(matrix: sp.spmatrix) -> tuple[int, int]:
    """Lower and upper bandwidth of a sparse matrix."""
    coo = sp.coo_matrix(matrix)
    if coo.nnz == 0:
        return 0, 0
    offsets = coo.col - coo.row
    return int(max(0, -offsets.min())), int(max(0, offsets.max()))


def to_banded(matrix: sp.spmatrix, lower: int, upper: int) -> np.ndarray:
    """Diagonal-ordered storage ``ab[u + i - j, j] = a[i, j]``."""
    coo = sp.coo_matrix(matrix)
    ab = np.zeros((lower + upper + 1, coo.shape[1]))
    ab[upper + coo.row - coo.col, coo.col] = coo.data
    return ab


def solve_direct_banded(matrix: sp.spmatrix | np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Banded LU solve for 1D discretizations.

    Args:
        matrix: Square banded matrix (sparse or dense)
        rhs: Right-hand side

    Returns:
        Solution with ||Ax - b||_inf <= 1e-10 (||A||_inf ||x||_inf + ||b||_inf)

    Raises:
        SingularMatrixError: Zero pivot
    """
    A = sp.csr_matrix(matrix)
    rhs = np.asarray(rhs, dtype=float)
    lower, upper = bandwidth(A)
    ab = to_banded(A, lower, upper)
    try:
        x = scipy.linalg.solve_banded((lower, upper), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            f"Banded solve hit a singular pivot: {exc}", stage="linalg", n=A.shape[0]
        ) from exc
    _check_direct(A, x, rhs, DIRECT_RESIDUAL_FACTOR, "banded solve")
    return x


class SparseFactor:
    """Sparse LU factorization reused across right-hand sides."""

    def __init__(self, matrix: sp.spmatrix):
        self.matrix = sp.csc_matrix(matrix)
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise SingularMatrixError(
                f"Sparse LU failed: {exc}", stage="linalg", n=self.matrix.shape[0]
            ) from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        x = self._lu.solve(rhs)
        _check_direct(self.matrix, x, rhs, DIRECT_RESIDUAL_FACTOR, "sparse LU solve")
        return x


def solve_sparse_direct(matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """Sparse LU solve for matrices without a narrow band (periodic stencils)."""
    return SparseFactor(matrix).solve(rhs)


def is_symmetric(matrix: sp.spmatrix, rtol: float = 1e-12) -> bool:
    A = sp.csr_matrix(matrix)
    diff = abs(A - A.T)
    scale = float(abs(A).max()) if A.nnz else 0.0
    return diff.nnz == 0 or float(diff.max()) <= rtol * max(scale, 1.0)


def solve_iterative(
    matrix: sp.spmatrix,
    rhs: np.ndarray,
    method: str = "bicgstab",
    tol: float = 1e-10,
    max_iter: int = 10000,
    x0: np.ndarray | None = None,
    restarts: int = 3,
) -> tuple[np.ndarray, int, float]:
    """
    Jacobi-preconditioned conjugate gradient or BiCGStab.

    Args:
        matrix: Square sparse matrix
        rhs: Right-hand side
        method: ``"cg"`` (symmetric positive definite only) or ``"bicgstab"``
        tol: Relative residual target ||b - Ax||_2 / ||b||_2
        max_iter: Iteration cap per attempt
        x0: Initial guess
        restarts: Extra attempts from the last iterate if the true residual
            drifted above the target

    Returns:
        ``(solution, iterations, relative_residual)``

    Raises:
        SolverError: cg requested on a nonsymmetric matrix, unknown method
        ConvergenceError: Breakdown or iteration cap, with the last residual
    """
    if method not in ("cg", "bicgstab"):
        raise SolverError(f"Unknown iterative method '{method}'", stage="linalg")
    A = sp.csr_matrix(matrix)
    rhs = np.asarray(rhs, dtype=float)
    if method == "cg" and not is_symmetric(A):
        raise SolverError("cg requires a symmetric matrix", stage="linalg")

    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs), 0, 0.0

    diag = A.diagonal()
    if np.any(diag == 0.0):
        raise SingularMatrixError("Zero diagonal entry, Jacobi preconditioner undefined")
    M = sp.diags(1.0 / diag)
    krylov = spla.cg if method == "cg" else spla.bicgstab

    x = np.zeros_like(rhs) if x0 is None else np.asarray(x0, dtype=float).copy()
    iterations = 0
    rel_res = np.inf
    for attempt in range(restarts + 1):
        count = [0]

        def _count(_xk, count=count):
            count[0] += 1

        x, info = krylov(
            A, rhs, x0=x, rtol=tol, atol=0.0, maxiter=max_iter, M=M, callback=_count
        )
        iterations += count[0]
        rel_res = float(np.linalg.norm(rhs - A @ x)) / rhs_norm
        if info < 0 or not np.all(np.isfinite(x)):
            raise ConvergenceError(
                f"{method} breakdown (info={info})",
                last_residual=rel_res,
                iterations=iterations,
                stage="linalg",
            )
        if rel_res <= tol:
            break
        if info > 0:
            raise ConvergenceError(
                f"{method} did not reach tol={tol:g} in {max_iter} iterations",
                last_residual=rel_res,
                iterations=iterations,
                stage="linalg",
            )
        logger.debug(
            f"{method} restart {attempt + 1}: true residual {rel_res:.3e} > {tol:g}"
        )
    else:
        raise ConvergenceError(
            f"{method} residual {rel_res:.3e} above tol after {restarts} restarts",
            last_residual=rel_res,
            iterations=iterations,
            stage="linalg",
        )
    return x, iterations, rel_res


class CholeskyFactor:
    """Cached dense Cholesky factorization of an SPD matrix."""

    def __init__(self, matrix: np.ndarray, cap: int = DEFAULT_DENSE_CAP):
        matrix = np.asarray(matrix, dtype=float)
        n = matrix.shape[0]
        if matrix.ndim != 2 or matrix.shape[1] != n:
            raise SolverError(f"Dense SPD solve needs a square matrix, got {matrix.shape}")
        if n > cap:
            raise SolverError(
                f"Dense system of size {n} exceeds the cap {cap}",
                stage="linalg",
                n=n,
                cap=cap,
            )
        try:
            self._factor = scipy.linalg.cho_factor(matrix, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                f"Cholesky factorization failed: {exc}", stage="linalg", n=n
            ) from exc
        self.matrix = matrix

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        x = scipy.linalg.cho_solve(self._factor, rhs)
        _check_direct(self.matrix, x, rhs, DENSE_RESIDUAL_FACTOR, "dense SPD solve")
        return x


def solve_dense_spd(
    matrix: np.ndarray, rhs: np.ndarray, cap: int = DEFAULT_DENSE_CAP
) -> np.ndarray:
    """
    Dense Cholesky solve.

    Raises:
        NotPositiveDefiniteError: Matrix is not positive definite
        SolverError: Dimension above ``cap``
    """
    return CholeskyFactor(matrix, cap=cap).solve(rhs)
