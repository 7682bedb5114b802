"""
Tests for the harness.py module
"""

import dataclasses
import logging

import pytest

from src.errors import ConfigError
from src.fields import make_checkerboard, make_periodic
from src.harness import (
    REPORT_COLUMNS,
    ConvergenceReport,
    StudySpec,
    fit_rate,
    monte_carlo_ensemble,
    run_convergence_study,
    study_grid,
    transform_equivalence,
)
from src.norms import WEAKLY_CONVERGENT
from src.parabolic_solver import CauchyDirichletProblem, exp_shifted_problem, solve_problem
from src.profiles import BoundaryProfile
from src.twoscale import PASS

EPSILONS = [0.5, 0.25, 0.125]


@pytest.fixture
def bump_profile():
    return BoundaryProfile("gaussian-bump", {"width": 0.2})


@pytest.fixture
def checkerboard_spec(bump_profile):
    return StudySpec(
        field=make_checkerboard([1.0, 4.0], None, None, seed=5),
        boundary=bump_profile,
        epsilons=[0.5, 0.25],
        cells_per_period=2,
        corrector_nx=4,
        with_error_functional=False,
    )


@pytest.fixture
def static_checkerboard_spec(bump_profile):
    return StudySpec(
        field=make_checkerboard([1.0, 4.0], None, None, seed=5, time_dependent=False),
        boundary=bump_profile,
        epsilons=[0.5, 0.25, 0.125, 0.0625],
        cells_per_period=4,
        corrector_nx=4,
        with_error_functional=False,
    )


class TestFitRate:
    """Tests for the log-log rate fit."""

    def test_linear_rate(self):
        """Test errors proportional to eps give slope 1."""
        fit = fit_rate([0.3 * e for e in EPSILONS], EPSILONS)

        assert fit.slope == pytest.approx(1.0)
        assert fit.r_squared == pytest.approx(1.0)

    def test_quadratic_rate(self):
        """Test errors proportional to eps^2 give slope 2."""
        assert fit_rate([e**2 for e in EPSILONS], EPSILONS).slope == pytest.approx(2.0)

    def test_noisy_rate(self):
        """Test a few percent of noise keeps the slope near 1."""
        eps = [0.5, 0.25, 0.125, 0.0625]
        errors = [e * (1.0 + n) for e, n in zip(eps, [0.03, -0.02, 0.04, -0.03], strict=True)]
        fit = fit_rate(errors, eps)

        assert 0.9 <= fit.slope <= 1.1
        assert fit.r_squared > 0.99

    def test_too_few_points(self):
        """Test at least 3 points are required."""
        with pytest.raises(ConfigError):
            fit_rate([0.1, 0.05], [0.5, 0.25])

    def test_nonpositive_entries(self):
        """Test zero errors cannot be fitted."""
        with pytest.raises(ConfigError):
            fit_rate([0.1, 0.0, 0.01], EPSILONS)

    def test_mismatched_lengths(self):
        """Test errors and scales must align."""
        with pytest.raises(ConfigError):
            fit_rate([0.1, 0.05, 0.02, 0.01], EPSILONS)


class TestStudyGrid:
    """Tests for the shared fine grid."""

    def test_time_invariant_field(self, laminate_field, bump_profile):
        """Test time levels follow eps_min for time-invariant fields."""
        spec = StudySpec(laminate_field, bump_profile, [0.5, 0.25], cells_per_period=8)
        grid = study_grid(spec)

        assert grid.nx == 33
        assert grid.nt == 9

    def test_time_dependent_field(self, bump_profile):
        """Test time levels resolve eps_min^2 for time-dependent fields."""
        spec = StudySpec(make_periodic(), bump_profile, [0.5, 0.25], cells_per_period=8)

        assert study_grid(spec).nt == 33

    def test_explicit_sizes(self, laminate_field, bump_profile):
        """Test explicit nx and nt win."""
        spec = StudySpec(laminate_field, bump_profile, [0.5], nx=11, nt=21)
        grid = study_grid(spec)

        assert (grid.nx, grid.nt) == (11, 21)

    def test_invalid_cells(self, laminate_field, bump_profile):
        """Test cells_per_period must be positive."""
        with pytest.raises(ConfigError):
            study_grid(StudySpec(laminate_field, bump_profile, [0.5], cells_per_period=0))


class TestTransformEquivalence:
    """Tests for the exp(-Lambda t) consistency check."""

    def test_within_bound(self, constant_field, grid_1d, bump_data):
        """Test the shifted solve agrees with the transformed solution."""
        problem = CauchyDirichletProblem(constant_field, grid_1d, bump_data)
        p = solve_problem(problem).solution
        p_hat = solve_problem(exp_shifted_problem(problem)).solution
        residual, bound = transform_equivalence(p, p_hat, constant_field.Lam)

        assert residual <= bound


class TestConvergenceStudy:
    """Tests for the epsilon sweep."""

    def test_empty_epsilon_list(self, constant_field, bump_profile):
        """Test an empty sweep returns an empty report."""
        report = run_convergence_study(StudySpec(constant_field, bump_profile, []))

        assert report.epsilons == []
        assert report.to_dict()["l2_errors"] == []

    def test_constant_field(self, constant_field, bump_profile):
        """Test constant coefficients reproduce the homogenized solution."""
        spec = StudySpec(constant_field, bump_profile, EPSILONS, cells_per_period=2)
        report = run_convergence_study(spec, config_hash="abc")

        assert report.epsilons == EPSILONS
        assert max(report.l2_errors) <= 1e-8
        assert max(report.dual_grad_errors) <= 1e-8
        assert report.E_values == [0.0, 0.0, 0.0]
        assert report.fitted_rates["l2_error"] is None
        assert report.weak_gradient_verdict == WEAKLY_CONVERGENT
        assert report.bound_verdict == PASS
        assert report.config_hash == "abc"
        assert report.coefficients["a_bar"] == [[2.0]]

    def test_rows_follow_columns(self, constant_field, bump_profile):
        """Test every row has one value per documented column."""
        spec = StudySpec(
            constant_field,
            bump_profile,
            [0.5, 0.25],
            cells_per_period=2,
            with_error_functional=False,
        )
        report = run_convergence_study(spec)

        assert ConvergenceReport.columns() == REPORT_COLUMNS
        assert set(ConvergenceReport.column_descriptions()) == set(REPORT_COLUMNS)
        assert all(len(row) == len(REPORT_COLUMNS) for row in report.rows())
        assert report.E_values == [None, None]
        assert report.bounds == []

    @pytest.mark.slow
    def test_laminate_rate(self, laminate_field, bump_profile):
        """Test the L2 error of a laminate decreases at rate close to 1."""
        spec = StudySpec(
            laminate_field, bump_profile, [0.25, 0.125, 0.0625], cells_per_period=4
        )
        report = run_convergence_study(spec)
        fit = report.fitted_rates["l2_error"]

        assert report.monotone
        assert fit is not None
        assert 0.5 <= fit.slope <= 1.5
        assert all(e > 0 for e in report.E_values)

    @pytest.mark.slow
    def test_periodic_rate(self, bump_profile):
        """Test the L2 error of a periodic field drops at rate at least 0.8."""
        field = make_periodic(a0=2.0, alpha=0.5, lam=4.0, time_dependent=False)
        spec = StudySpec(
            field,
            bump_profile,
            [1 / 8, 1 / 16, 1 / 32, 1 / 64],
            cells_per_period=8,
            corrector_nx=64,
            with_error_functional=False,
        )
        report = run_convergence_study(spec)
        fit = report.fitted_rates["l2_error"]

        assert all(b < a for a, b in zip(report.l2_errors, report.l2_errors[1:], strict=False))
        assert fit is not None
        assert fit.slope >= 0.8

    def test_logs_worker_stats(self, constant_field, bump_profile, caplog):
        """Test the sweep logs the worker statistics of its runner."""
        spec = StudySpec(
            constant_field,
            bump_profile,
            [0.5, 0.25],
            cells_per_period=2,
            with_error_functional=False,
        )
        caplog.set_level(logging.INFO, logger="study")
        run_convergence_study(spec)

        assert "Final statistics:" in caplog.text
        assert "total_tasks: 2" in caplog.text
        assert "total_errors: 0" in caplog.text


class TestMonteCarloEnsemble:
    """Tests for checkerboard ensembles."""

    def test_requires_checkerboard(self, constant_field, bump_profile):
        """Test the template must be a checkerboard."""
        spec = StudySpec(constant_field, bump_profile, [0.5])
        with pytest.raises(ConfigError):
            monte_carlo_ensemble(spec, n_samples=2, base_seed=0)

    def test_requires_two_samples(self, checkerboard_spec):
        """Test at least two realizations are required."""
        with pytest.raises(ConfigError):
            monte_carlo_ensemble(checkerboard_spec, n_samples=1, base_seed=0)

    @pytest.mark.slow
    def test_ensemble(self, static_checkerboard_spec):
        """Test medians per epsilon decrease as epsilon halves."""
        report = monte_carlo_ensemble(static_checkerboard_spec, n_samples=3, base_seed=11, L=2)
        medians = report.medians["l2_error"]

        assert report.n_samples == 3
        assert report.n_failures == 0
        assert report.epsilons == [0.5, 0.25, 0.125, 0.0625]
        assert all(m is not None and m > 0.0 for m in medians)
        assert all(b < a for a, b in zip(medians, medians[1:], strict=False))
        assert report.medians["E_total"] == [None] * 4
        assert [s.seeds for s in report.samples] == [[seed] for seed in report.seeds]

    def test_seed_order_independence(self, static_checkerboard_spec, caplog):
        """Test swapping the seed list swaps the samples and keeps the aggregates."""
        spec = dataclasses.replace(static_checkerboard_spec, epsilons=[0.5, 0.25])
        caplog.set_level(logging.DEBUG, logger="src.harness")
        first = monte_carlo_ensemble(spec, n_samples=2, base_seed=0, seeds=[3, 8], L=2)
        second = monte_carlo_ensemble(spec, n_samples=2, base_seed=0, seeds=[8, 3], L=2)

        for a, b in ((first.samples[0], second.samples[1]), (first.samples[1], second.samples[0])):
            assert a.seeds == b.seeds
            assert a.l2_errors == b.l2_errors
            assert a.dual_grad_errors == b.dual_grad_errors
            assert a.coefficients == b.coefficients
        assert first.medians == second.medians
        assert first.iqrs == second.iqrs
        assert "Sample seed=3: a_bar=" in caplog.text

    def test_failures_collected(self, checkerboard_spec):
        """Test failing samples are recorded and the run completes."""
        checkerboard_spec.corrector_tol = 1e-300
        checkerboard_spec.max_periods = 1
        report = monte_carlo_ensemble(checkerboard_spec, n_samples=2, base_seed=11, L=4)

        assert report.n_failures == 2
        assert report.samples == [None, None]
        assert report.failures[0]["error"] == "ConvergenceError"
        assert report.failures[1]["sample_index"] == 1
        assert report.medians["l2_error"] == [None, None]
        assert all(row[-1] == 0 for row in report.rows())
