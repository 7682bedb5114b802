"""
Tests for the parabolic_solver.py module
"""

import math

import numpy as np
import pytest

from src.corrector import HomogenizedCoefficients
from src.errors import ConfigError, FieldBoundError, ResolutionError
from src.fields import make_constant, make_periodic, rescale
from src.linalg import SolverSettings
from src.mesh import DiscreteField, build_grid
from src.norms import lp_norm
from src.parabolic_solver import (
    CauchyDirichletProblem,
    assemble_step,
    exp_shifted_problem,
    exp_transform,
    manufactured_source,
    pde_residual,
    solve_homogenized,
    solve_problem,
)
from src.profiles import BoundaryProfile


class TestCauchyDirichletProblem:
    """Tests for problem validation."""

    def test_grid_mismatch(self, grid_1d, constant_field):
        """Test boundary data on another grid is rejected."""
        other = build_grid(1, (0.0, 1.0), 9, (0.0, 0.25), 33)
        with pytest.raises(ConfigError):
            CauchyDirichletProblem(constant_field, grid_1d, DiscreteField.zeros(other))

    def test_dimension_mismatch(self, grid_2d, constant_field):
        """Test a 1D field on a 2D grid is rejected."""
        with pytest.raises(ConfigError):
            CauchyDirichletProblem(constant_field, grid_2d, DiscreteField.zeros(grid_2d))

    def test_shift_must_be_lambda(self, grid_1d, constant_field, zero_data):
        """Test lambda_shift is 0 or Lam."""
        with pytest.raises(ConfigError):
            CauchyDirichletProblem(constant_field, grid_1d, zero_data, lambda_shift=0.5)


class TestSolveProblem:
    """Tests for the implicit Euler march."""

    def test_affine_steady_state(self, grid_1d):
        """Test an affine profile is reproduced exactly without lower-order terms."""
        f = BoundaryProfile("affine")(grid_1d)
        result = solve_problem(CauchyDirichletProblem(make_constant(2.0), grid_1d, f))

        assert np.allclose(result.solution.values, f.values, atol=1e-10)
        assert len(result.iterations) == grid_1d.nt - 1

    def test_boundary_and_initial_values(self, grid_1d, constant_field, bump_data):
        """Test the parabolic boundary carries the data."""
        p = solve_problem(CauchyDirichletProblem(constant_field, grid_1d, bump_data)).solution

        assert np.array_equal(p.values[0], bump_data.values[0])
        assert np.array_equal(p.values[:, 0], bump_data.values[:, 0])
        assert np.array_equal(p.values[:, -1], bump_data.values[:, -1])

    def test_zero_data_zero_solution(self, grid_1d, constant_field, zero_data):
        """Test zero data and zero source give zero."""
        p = solve_problem(CauchyDirichletProblem(constant_field, grid_1d, zero_data)).solution

        assert np.all(p.values == 0.0)

    def test_decay(self, grid_1d, bump_data):
        """Test the solution decays for zero lateral data."""
        f = DiscreteField(grid_1d, bump_data.values.copy())
        f.values[1:] = 0.0
        f.values[:, [0, -1]] = 0.0
        p = solve_problem(CauchyDirichletProblem(make_constant(1.0), grid_1d, f)).solution

        assert np.abs(p.values[-1]).max() < np.abs(p.values[0]).max()

    def test_manufactured_solution(self):
        """Test second-order spatial accuracy on p = sin(pi x) exp(-t)."""
        errors = []
        for nx in (9, 17):
            h = 1.0 / (nx - 1)
            grid = build_grid(1, (0.0, 1.0), nx, (0.0, 0.1), round(0.1 / (0.05 * h * h)) + 1)
            exact = DiscreteField.from_function(
                grid, lambda x, t: np.sin(np.pi * x) * np.exp(-t)
            )
            source = manufactured_source(
                grid,
                time_derivative=lambda x, t: -np.sin(np.pi * x) * np.exp(-t),
                gradient=lambda x, t: [np.pi * np.cos(np.pi * x) * np.exp(-t)],
                hessian=lambda x, t: [[-np.pi**2 * np.sin(np.pi * x) * np.exp(-t)]],
                value=lambda x, t: np.sin(np.pi * x) * np.exp(-t),
                a=1.5,
                b=0.5,
                d=-0.5,
            )
            problem = CauchyDirichletProblem(
                make_constant(1.5, 0.5, -0.5, lam=2.0), grid, exact, source=source
            )
            p = solve_problem(problem).solution
            errors.append(np.abs(p.values - exact.values).max())

        assert errors[1] < errors[0] / 3.0

    def test_2d_solve(self, grid_2d):
        """Test a 2D solve with a time-dependent field passes its residual check."""
        field = make_periodic(spatial_dim=2)
        f = BoundaryProfile("gaussian-bump")(grid_2d)
        problem = CauchyDirichletProblem(rescale(field, 0.5), grid_2d, f)
        result = solve_problem(problem)

        assert result.max_residual <= 1e-9
        assert sum(result.iterations) > 0
        assert pde_residual(problem, result.solution) <= 1e-9

    def test_peclet_guard(self):
        """Test a coarse grid with strong drift is refused."""
        grid = build_grid(1, (0.0, 1.0), 3, (0.0, 0.1), 3)
        field = make_constant(1.0, 4.5, lam=1.0, Lam=25.0)
        with pytest.raises(ResolutionError):
            solve_problem(CauchyDirichletProblem(field, grid, DiscreteField.zeros(grid)))

    def test_step_errors_carry_time_level(self, grid_1d, zero_data):
        """Test assembly failures during the march report their time level."""
        grid = build_grid(1, (0.0, 1.0), 3, (0.0, 0.1), 3)
        drift = make_constant(1.0, 4.5, lam=1.0, Lam=25.0)
        with pytest.raises(ResolutionError) as resolution:
            solve_problem(CauchyDirichletProblem(drift, grid, DiscreteField.zeros(grid)))
        with pytest.raises(FieldBoundError) as bounds:
            solve_problem(
                CauchyDirichletProblem(make_constant(0.5, check=False), grid_1d, zero_data)
            )

        assert resolution.value.context["time_level"] == 1
        assert resolution.value.stage == "assembly"
        assert bounds.value.to_dict()["context"]["time_level"] == 1

    def test_face_ellipticity_guard(self, grid_1d, zero_data):
        """Test face coefficients below 1 are refused at assembly."""
        field = make_constant(0.5, check=False)
        with pytest.raises(FieldBoundError):
            assemble_step(CauchyDirichletProblem(field, grid_1d, zero_data), 1)

    def test_assemble_step_level(self, grid_1d, constant_field, zero_data):
        """Test the time level must lie in 1..nt-1."""
        problem = CauchyDirichletProblem(constant_field, grid_1d, zero_data)
        with pytest.raises(ConfigError):
            assemble_step(problem, 0)


class TestResidual:
    """Tests for the recomputed residual."""

    def test_solution_residual(self, grid_1d, constant_field, bump_data):
        """Test a computed solution has a tiny residual."""
        problem = CauchyDirichletProblem(constant_field, grid_1d, bump_data)
        p = solve_problem(problem).solution

        assert pde_residual(problem, p) <= 1e-10

    def test_boundary_mismatch_is_infinite(self, grid_1d, constant_field, bump_data):
        """Test a trajectory breaking the boundary data has infinite residual."""
        problem = CauchyDirichletProblem(constant_field, grid_1d, bump_data)
        p = solve_problem(problem).solution
        broken = DiscreteField(grid_1d, p.values.copy())
        broken.values[3, 0] += 1.0

        assert math.isinf(pde_residual(problem, broken))


class TestExponentialShift:
    """Tests for the exp(-Lambda t) transform."""

    def test_transform_inverts(self, bump_data):
        """Test Lambda -> -Lambda undoes the transform."""
        back = exp_transform(exp_transform(bump_data, 2.0), -2.0)

        assert np.allclose(back.values, bump_data.values)

    def test_shifted_problem(self, grid_1d, constant_field, bump_data):
        """Test solving the shifted problem matches transforming the solution."""
        problem = CauchyDirichletProblem(constant_field, grid_1d, bump_data)
        p = solve_problem(problem).solution
        p_hat = solve_problem(exp_shifted_problem(problem)).solution
        residual = lp_norm(exp_transform(p, constant_field.Lam) - p_hat)

        assert residual <= 5.0 * grid_1d.dt * constant_field.Lam * lp_norm(p)

    def test_shift_twice(self, grid_1d, constant_field, zero_data):
        """Test an already shifted problem cannot be shifted again."""
        problem = CauchyDirichletProblem(
            constant_field, grid_1d, zero_data, lambda_shift=constant_field.Lam
        )
        with pytest.raises(ConfigError):
            exp_shifted_problem(problem)


class TestSolveHomogenized:
    """Tests for the homogenized solve."""

    def test_matches_constant_solve(self, grid_1d, bump_data):
        """Test constant coefficients give the same trajectory as the direct solve."""
        coeffs = HomogenizedCoefficients(
            a_bar=np.array([[2.0]]), b_bar=np.array([0.5]), d_bar=-0.5, lam=4.0, Lam=1.0
        )
        p0 = solve_homogenized(coeffs, grid_1d, bump_data, settings=SolverSettings()).solution
        direct = solve_problem(
            CauchyDirichletProblem(make_constant(2.0, 0.5, -0.5, lam=4.0), grid_1d, bump_data)
        ).solution

        assert np.allclose(p0.values, direct.values, atol=1e-12)
