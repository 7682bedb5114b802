"""
Exception hierarchy for the homogenization toolkit.
"""

from typing import Any


class HomogenizationError(Exception):
    """Base error carrying the failing stage and a context dictionary."""

    exit_code: int = 3

    def __init__(
        self, message: str, stage: str | None = None, **context: Any
    ) -> None:
        super().__init__(message)
        self.message = message
        self.stage = stage
        self.context = context

    def to_dict(self) -> dict[str, Any]:
        """Machine-readable representation used by the CLI error output."""
        payload: dict[str, Any] = {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
        }
        if self.stage:
            payload["stage"] = self.stage
        if self.context:
            payload["context"] = {k: _plain(v) for k, v in self.context.items()}
        return payload


class ConfigError(HomogenizationError, ValueError):
    """Invalid or unreadable run configuration."""

    exit_code = 2


class MeshError(HomogenizationError, ValueError):
    """Degenerate or non-finite grid description."""


class FieldBoundError(HomogenizationError, ValueError):
    """A coefficient violates one of the structural bounds."""

    def __init__(self, message: str, constraint: str, **context: Any) -> None:
        super().__init__(message, **context)
        self.constraint = constraint

    def to_dict(self) -> dict[str, Any]:
        payload = super().to_dict()
        payload["constraint"] = self.constraint
        return payload


class ResolutionError(HomogenizationError, ValueError):
    """The grid does not resolve the scales it is asked to resolve."""


class SolverError(HomogenizationError):
    """Linear or time-stepping solver failure."""


class SingularMatrixError(SolverError):
    """Zero pivot met during a direct factorization."""


class NotPositiveDefiniteError(SolverError):
    """Cholesky factorization of a supposedly SPD matrix failed."""


class ConvergenceError(SolverError):
    """Iteration stopped before reaching its tolerance."""

    def __init__(
        self,
        message: str,
        last_residual: float,
        iterations: int = 0,
        **context: Any,
    ) -> None:
        super().__init__(message, **context)
        self.last_residual = last_residual
        self.iterations = iterations

    def to_dict(self) -> dict[str, Any]:
        payload = super().to_dict()
        payload["last_residual"] = float(self.last_residual)
        payload["iterations"] = int(self.iterations)
        return payload


class OutputError(HomogenizationError, OSError):
    """Result files could not be written."""

    exit_code = 4


def _plain(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return str(value)
