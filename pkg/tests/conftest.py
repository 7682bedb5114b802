# Test configuration for ParaHom
# This file configures pytest and provides common fixtures

import shutil
import tempfile
from pathlib import Path

import pytest

from src.fields import make_constant, make_laminate, make_periodic
from src.mesh import DiscreteField, build_grid
from src.profiles import BoundaryProfile


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    temp_path = tempfile.mkdtemp()
    yield temp_path
    shutil.rmtree(temp_path, ignore_errors=True)


@pytest.fixture
def grid_1d():
    """Small 1D grid with dt = c_par h^2."""
    return build_grid(1, (0.0, 1.0), 17, (0.0, 0.25), 129)


@pytest.fixture
def grid_2d():
    """Small 2D grid with dt = c_par h^2."""
    return build_grid(2, (0.0, 1.0), 9, (0.0, 0.25), 33)


@pytest.fixture
def constant_field():
    """Constant 1D field with drift and reaction."""
    return make_constant(2.0, 0.5, -0.5, lam=4.0, Lam=1.0)


@pytest.fixture
def laminate_field():
    """Two-layer 1D laminate with harmonic mean 1.6."""
    return make_laminate([1.0, 4.0])


@pytest.fixture
def periodic_field():
    """Smooth time-periodic 1D field."""
    return make_periodic(a0=2.0, alpha=0.5, lam=4.0)


@pytest.fixture
def affine_profile():
    """Boundary profile f(x, t) = x1 (+ x2)."""
    return BoundaryProfile("affine")


@pytest.fixture
def bump_data(grid_1d):
    """Gaussian bump sampled on the 1D grid."""
    return BoundaryProfile("gaussian-bump", {"width": 0.2})(grid_1d)


@pytest.fixture
def zero_data(grid_1d):
    return DiscreteField.zeros(grid_1d)


@pytest.fixture
def write_config(temp_dir):
    """Write a TOML configuration into the temporary directory."""

    def _write(text: str, name: str = "run.toml") -> Path:
        path = Path(temp_dir) / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


# Global pytest configuration
def pytest_configure(config):
    """Global pytest configuration."""
    import warnings

    warnings.filterwarnings("ignore", category=DeprecationWarning)
