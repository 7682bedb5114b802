"""
Declarative run configuration: TOML file validated by pydantic models.

Unknown keys are rejected in every section. Defaults are the documented
tolerances and resolutions; everything physical comes from the file.
"""

import logging
import math
import sys
from pathlib import Path
from typing import Any, Literal

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.errors import ConfigError
from src.fields import CoefficientField, CoefficientFieldFactory
from src.linalg import SolverSettings
from src.mesh import DEFAULT_C_PAR, SpaceTimeGrid, build_grid
from src.profiles import BoundaryProfile
from src.results import config_hash

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FieldConfig(_Section):
    """Coefficient field; the keys used depend on ``kind``."""

    kind: Literal["constant", "periodic", "checkerboard", "laminate"]
    dim: int | None = None
    lam: float | None = None
    Lam: float = 1.0
    a: Any = None
    b: list[float] | None = None
    d: float | None = None
    alpha: float | None = None
    M: list[list[float]] | None = None
    b_amplitude: float | None = None
    d_amplitude: float | None = None
    a_values: list[Any] | None = None
    b_values: list[list[float]] | None = None
    d_values: list[float] | None = None
    layers: list[Any] | None = None
    axis: int | None = None
    seed: int = 0
    time_dependent: bool | None = None
    period_L: int | None = None

    def to_spec(self) -> dict[str, Any]:
        return self.model_dump(exclude_none=True)

    def build(self, seed: int | None = None) -> CoefficientField:
        return CoefficientFieldFactory.from_spec(self.to_spec(), seed=seed)


class GridConfig(_Section):
    """Space-time grid, or the policy deriving it from the smallest epsilon."""

    box: tuple[float, float] = (0.0, 1.0)
    nx: int | None = None
    t0: float = 0.0
    t1: float = 0.25
    nt: int | None = None
    c_par: float = DEFAULT_C_PAR
    cells_per_period: int = 8

    def build(self, spatial_dim: int, default_nx: int = 65) -> SpaceTimeGrid:
        """Explicit grid; nt defaults to the parabolic limit dt <= c_par h^2."""
        nx = self.nx or default_nx
        h = (self.box[1] - self.box[0]) / (nx - 1)
        nt = self.nt or math.ceil((self.t1 - self.t0) / (self.c_par * h * h) - 1e-9) + 1
        return build_grid(spatial_dim, self.box, nx, (self.t0, self.t1), nt, c_par=self.c_par)


class BoundaryConfig(_Section):
    profile: Literal["affine", "gaussian-bump", "sine-sheet"] = "affine"
    params: dict[str, Any] = Field(default_factory=dict)

    def build(self) -> BoundaryProfile:
        return BoundaryProfile(self.profile, dict(self.params))


class SolverConfig(_Section):
    tol: float = 1e-10
    max_iter: int = 10000
    dense_cap: int = 20000
    dual_max_unknowns: int = 4096

    def settings(self) -> SolverSettings:
        return SolverSettings(tol=self.tol, max_iter=self.max_iter, dense_cap=self.dense_cap)


class CorrectorConfig(_Section):
    cell_nx: int = 32
    cell_nt: int | None = None
    tol: float = 1e-10
    max_periods: int = 50
    rve_L: int = 16
    rve_samples: int = 32
    rve_cell_nx: int = 8


class StudyConfig(_Section):
    epsilons: list[float] = Field(default_factory=lambda: [1 / 8, 1 / 16, 1 / 32, 1 / 64])
    epsilon: float = 0.125
    shifted: bool = False
    r_list: list[float] = Field(default_factory=lambda: [0.25, 0.125, 0.0625])
    delta: float = 0.1
    error_cells_per_period: int = 8
    with_error_functional: bool = True
    n_samples: int = 1
    base_seed: int = 0
    ensemble_L: int = 8

    @field_validator("epsilons")
    @classmethod
    def _check_epsilons(cls, value: list[float]) -> list[float]:
        if any(not 0.0 < e <= 1.0 for e in value):
            raise ValueError("every epsilon must lie in (0, 1]")
        return value


class DiagnosticsConfig(_Section):
    radii: list[float] = Field(default_factory=lambda: [0.0625, 0.125])
    center: list[float] | None = None
    deltas: list[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2, 0.5])
    n_samples: int = 1
    epsilon: float = 0.25
    band: float = 10.0


class OutputConfig(_Section):
    dir: str = "results"
    format: Literal["csv", "json"] = "json"


class RunConfig(_Section):
    """Whole run configuration; ``field`` is the only required section."""

    field: FieldConfig
    grid: GridConfig = Field(default_factory=GridConfig)
    boundary: BoundaryConfig = Field(default_factory=BoundaryConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    corrector: CorrectorConfig = Field(default_factory=CorrectorConfig)
    study: StudyConfig = Field(default_factory=StudyConfig)
    diagnostics: DiagnosticsConfig = Field(default_factory=DiagnosticsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def config_hash(self) -> str:
        return config_hash(self.model_dump(mode="json"))

    def seeds(self) -> list[int]:
        return sorted({self.field.seed, self.study.base_seed})


def parse_config(data: dict[str, Any], seed: int | None = None) -> RunConfig:
    """
    Validate a configuration mapping.

    Args:
        data: Parsed TOML tables
        seed: Overrides ``field.seed`` and ``study.base_seed``

    Raises:
        ConfigError: Schema violation, listing every offending key
    """
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = [
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        ]
        raise ConfigError(
            f"Invalid configuration: {'; '.join(problems)}", stage="config", problems=problems
        ) from exc
    if seed is not None:
        config.field.seed = seed
        config.study.base_seed = seed
    return config


def load_config(path: str | Path, seed: int | None = None) -> RunConfig:
    """Read and validate a TOML configuration file."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}", stage="config") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"Malformed TOML in {path}: {exc}", stage="config") from exc
    config = parse_config(data, seed)
    logger.info(f"Configuration loaded from {path} (hash {config.config_hash()[:12]})")
    return config
