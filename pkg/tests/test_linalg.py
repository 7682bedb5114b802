"""
Tests for the linalg.py module
"""

import numpy as np
import pytest
import scipy.sparse as sp

from src.errors import ConvergenceError, NotPositiveDefiniteError, SingularMatrixError, SolverError
from src.linalg import (
    CholeskyFactor,
    SparseFactor,
    assemble_csr,
    bandwidth,
    is_symmetric,
    solve_dense_spd,
    solve_direct_banded,
    solve_iterative,
    to_banded,
)


def laplacian_1d(n: int) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


def laplacian_2d(n: int) -> sp.csr_matrix:
    eye = sp.identity(n)
    lap = laplacian_1d(n)
    return (sp.kron(lap, eye) + sp.kron(eye, lap)).tocsr()


class TestAssembly:
    """Tests for triplet assembly and band storage."""

    def test_duplicates_summed(self):
        """Test duplicate triplets are added."""
        matrix = assemble_csr(np.array([0, 0, 1]), np.array([0, 0, 1]), np.array([1.0, 2.0, 5.0]), 2)

        assert matrix[0, 0] == 3.0
        assert matrix[1, 1] == 5.0
        assert matrix.has_sorted_indices

    def test_non_finite(self):
        """Test NaN entries are rejected."""
        with pytest.raises(SolverError):
            assemble_csr(np.array([0]), np.array([0]), np.array([np.nan]), 1)

    def test_bandwidth(self):
        """Test the band of a tridiagonal matrix."""
        assert bandwidth(laplacian_1d(5)) == (1, 1)
        assert bandwidth(sp.csr_matrix((3, 3))) == (0, 0)

    def test_to_banded_layout(self):
        """Test diagonal-ordered storage."""
        ab = to_banded(laplacian_1d(4), 1, 1)

        assert np.allclose(ab[1], 2.0)
        assert np.allclose(ab[0, 1:], -1.0)
        assert np.allclose(ab[2, :-1], -1.0)


class TestDirectSolves:
    """Tests for banded, sparse and dense direct solves."""

    def test_banded_solution(self):
        """Test the banded solve reproduces a known solution."""
        A = laplacian_1d(50) + sp.identity(50)
        x_true = np.linspace(0.0, 1.0, 50)
        x = solve_direct_banded(A, A @ x_true)

        assert np.allclose(x, x_true, atol=1e-10)

    def test_banded_singular(self):
        """Test a zero pivot raises SingularMatrixError."""
        with pytest.raises(SingularMatrixError):
            solve_direct_banded(sp.csr_matrix(np.zeros((3, 3))), np.ones(3))

    def test_sparse_factor_reuse(self):
        """Test one factorization serves several right-hand sides."""
        A = laplacian_2d(6) + sp.identity(36)
        factor = SparseFactor(A)
        for k in range(3):
            b = np.full(36, float(k + 1))
            assert np.allclose(A @ factor.solve(b), b)

    def test_dense_spd(self):
        """Test the Cholesky solve."""
        A = np.array([[4.0, 1.0], [1.0, 3.0]])
        x = solve_dense_spd(A, np.array([1.0, 2.0]))

        assert np.allclose(A @ x, [1.0, 2.0])

    def test_dense_not_spd(self):
        """Test an indefinite matrix raises NotPositiveDefiniteError."""
        with pytest.raises(NotPositiveDefiniteError):
            CholeskyFactor(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_dense_cap(self):
        """Test systems above the cap are refused."""
        with pytest.raises(SolverError):
            CholeskyFactor(np.eye(5), cap=4)


class TestIterativeSolves:
    """Tests for Jacobi-preconditioned Krylov solves."""

    def test_cg(self):
        """Test CG reaches the requested residual."""
        A = laplacian_2d(10) + 0.1 * sp.identity(100)
        b = np.ones(100)
        x, iterations, rel_res = solve_iterative(A, b, method="cg", tol=1e-10)

        assert rel_res <= 1e-10
        assert iterations > 0
        assert np.linalg.norm(b - A @ x) <= 1e-10 * np.linalg.norm(b)

    def test_bicgstab_nonsymmetric(self):
        """Test BiCGStab on a convection-diffusion matrix."""
        n = 40
        A = laplacian_1d(n) + sp.diags([0.2 * np.ones(n - 1)], [1]) + sp.identity(n)
        b = np.ones(n)
        x, _, rel_res = solve_iterative(A, b, method="bicgstab", tol=1e-10)

        assert rel_res <= 1e-10
        assert np.allclose(A @ x, b, atol=1e-8)

    def test_cg_rejects_nonsymmetric(self):
        """Test CG refuses a nonsymmetric matrix."""
        A = laplacian_1d(5) + sp.diags([0.5 * np.ones(4)], [1])

        assert not is_symmetric(A)
        with pytest.raises(SolverError):
            solve_iterative(A, np.ones(5), method="cg")

    def test_zero_rhs(self):
        """Test a zero right-hand side returns zero immediately."""
        x, iterations, rel_res = solve_iterative(laplacian_1d(5), np.zeros(5))

        assert np.all(x == 0.0)
        assert iterations == 0
        assert rel_res == 0.0

    def test_iteration_cap(self):
        """Test the cap raises ConvergenceError with the last residual."""
        A = laplacian_2d(20)
        with pytest.raises(ConvergenceError) as exc_info:
            solve_iterative(A, np.ones(400), method="cg", tol=1e-14, max_iter=2, restarts=0)

        assert exc_info.value.last_residual > 1e-14
        assert exc_info.value.iterations >= 1

    def test_unknown_method(self):
        """Test unknown methods are rejected."""
        with pytest.raises(SolverError):
            solve_iterative(laplacian_1d(3), np.ones(3), method="gmres")
