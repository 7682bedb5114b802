"""
Tests for the errors.py module
"""

import numpy as np

from src.errors import (
    ConfigError,
    ConvergenceError,
    FieldBoundError,
    HomogenizationError,
    MeshError,
    OutputError,
    SingularMatrixError,
    SolverError,
)


class TestHomogenizationError:
    """Tests for the base error."""

    def test_stage_and_context(self):
        """Test that stage and context are kept."""
        error = HomogenizationError("boom", stage="solve", time_level=3)

        assert str(error) == "boom"
        assert error.stage == "solve"
        assert error.context == {"time_level": 3}

    def test_to_dict(self):
        """Test the machine-readable payload."""
        payload = SolverError("failed", stage="linalg", n=10).to_dict()

        assert payload["error"] == "SolverError"
        assert payload["message"] == "failed"
        assert payload["stage"] == "linalg"
        assert payload["context"] == {"n": 10}
        assert payload["exit_code"] == 3

    def test_context_values_made_plain(self):
        """Test that non-JSON context values are stringified."""
        payload = HomogenizationError("x", arr=np.zeros(2), pair=(1, 2)).to_dict()

        assert isinstance(payload["context"]["arr"], str)
        assert payload["context"]["pair"] == [1, 2]


class TestExitCodes:
    """Tests for the exit codes of the subclasses."""

    def test_config_error(self):
        """Test configuration errors exit with 2."""
        assert ConfigError("x").exit_code == 2
        assert isinstance(ConfigError("x"), ValueError)

    def test_numerical_errors(self):
        """Test numerical failures exit with 3."""
        assert MeshError("x").exit_code == 3
        assert SingularMatrixError("x").exit_code == 3
        assert isinstance(SingularMatrixError("x"), SolverError)

    def test_output_error(self):
        """Test output errors exit with 4 and are OSErrors."""
        error = OutputError("x")
        assert error.exit_code == 4
        assert isinstance(error, OSError)


class TestSpecializedPayloads:
    """Tests for subclasses carrying extra fields."""

    def test_field_bound_error(self):
        """Test the constraint is part of the payload."""
        error = FieldBoundError("d positive", "d <= 0")

        assert error.constraint == "d <= 0"
        assert error.to_dict()["constraint"] == "d <= 0"

    def test_convergence_error(self):
        """Test the last residual and iteration count are reported."""
        error = ConvergenceError("stalled", last_residual=1e-3, iterations=50)
        payload = error.to_dict()

        assert payload["last_residual"] == 1e-3
        assert payload["iterations"] == 50
