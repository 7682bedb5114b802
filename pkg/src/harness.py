"""End-to-end experiments: epsilon sweeps, rate fits and Monte-Carlo ensembles.

A convergence study runs as a task graph:

    correctors -> coefficients -> homogenized solves
               -> per-epsilon heterogeneous solves and norms (parallel)
               -> aggregation (sequential, in epsilon order)

All epsilons share one fine grid, so the errors are compared without
interpolation. The dual-norm workspace of that grid is factorized once and
shared by the per-epsilon tasks behind a lock.

Classes:
    StudySpec: Everything a study needs besides the seeds and hashes
    EpsilonResult: Measurements at one scale
    ConvergenceReport: Aligned per-epsilon sequences plus fitted rates
    RateFit: Log-log least-squares fit
    EnsembleReport: Per-sample reports plus median/IQR aggregation
"""

import dataclasses
import logging
import math
import threading
import time
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field as dataclass_field
from functools import partial
from typing import Any

import numpy as np

from src.corrector import (
    DEFAULT_CELL_NX,
    DEFAULT_MAX_PERIODS,
    DEFAULT_TOL,
    CorrectorSolution,
    HomogenizedCoefficients,
    homogenized_coefficients,
    sample_seeds,
    solve_correctors,
)
from src.errors import ConfigError, HomogenizationError
from src.fields import CheckerboardField, CoefficientField, rescale
from src.linalg import SolverSettings
from src.logging_config import study_logger
from src.mesh import DEFAULT_C_PAR, DiscreteField, SpaceTimeGrid, build_grid
from src.norms import (
    DEFAULT_MAX_UNKNOWNS,
    NormWorkspace,
    classify_weak_convergence,
    geometric_ratio,
    lp_norm,
    w1par_norm,
)
from src.parabolic_solver import (
    CauchyDirichletProblem,
    exp_shifted_problem,
    exp_transform,
    solve_homogenized,
    solve_problem,
)
from src.parallel import ParallelRunner, Task, run_tasks
from src.profiles import BoundaryProfile
from src.twoscale import (
    DEFAULT_CELLS_PER_PERIOD,
    DEFAULT_DELTA,
    DEFAULT_R_LIST,
    BoundReport,
    ErrorFunctional,
    beta_exponent,
    bound_check,
    bound_sweep_verdict,
    error_functional,
    error_lhs,
)

logger = logging.getLogger(__name__)

TRANSFORM_FACTOR = 5.0
MONOTONE_SLACK = 0.05
MIN_FIT_POINTS = 3

REPORT_COLUMNS = ("epsilon", "l2_error", "dual_grad_error", "E_total", "runtime")
_COLUMN_DOCS = {
    "epsilon": "scale of the coefficient oscillation",
    "l2_error": "||p_eps - p0|| in L2 over the space-time domain",
    "dual_grad_error": "root sum of squares of the dual norms of d_k(p_eps - p0)",
    "E_total": "error functional E(eps) on the unit cell (empty when skipped)",
    "runtime": "wall-clock seconds of the epsilon task",
}


@dataclass
class StudySpec:
    """Inputs of a convergence study.

    Attributes:
        field: Periodic coefficient field at scale 1
        boundary: Cauchy-Dirichlet data profile
        epsilons: Scales, solved in decreasing order
        box: Spatial interval used on every axis
        time_interval: (I-, I+)
        cells_per_period: Grid cells per smallest eps-period in space
        nx: Nodes per axis, derived from ``cells_per_period`` when None
        nt: Time levels; when None, dt resolves eps_min^2 (time-dependent
            fields) or eps_min (time-invariant fields) with the same count
        c_par: Resolution constant reported by the grid
        corrector_nx: Cell-problem nodes per unit length
        corrector_nt: Cell-problem steps per unit time (automatic when None)
        corrector_tol: Periodicity tolerance of the cell problems
        max_periods: Period cap of the cell-problem march
        error_cells_per_period: Resolution of the E(eps) quadrature
        r_list: Cutoff widths of the bound check
        delta: Integrability increment behind beta
        dual_max_unknowns: Dual-norm coarsening threshold
        solver: Linear solver settings
        max_workers: Concurrent epsilon tasks
        with_error_functional: Evaluate E(eps) and the bound check
        seeds: Recorded with the report
    """

    field: CoefficientField
    boundary: BoundaryProfile
    epsilons: Sequence[float]
    box: tuple[float, float] = (0.0, 1.0)
    time_interval: tuple[float, float] = (0.0, 0.25)
    cells_per_period: int = 8
    nx: int | None = None
    nt: int | None = None
    c_par: float = DEFAULT_C_PAR
    corrector_nx: int = DEFAULT_CELL_NX
    corrector_nt: int | None = None
    corrector_tol: float = DEFAULT_TOL
    max_periods: int = DEFAULT_MAX_PERIODS
    error_cells_per_period: int = DEFAULT_CELLS_PER_PERIOD
    r_list: Sequence[float] = DEFAULT_R_LIST
    delta: float = DEFAULT_DELTA
    dual_max_unknowns: int = DEFAULT_MAX_UNKNOWNS
    solver: SolverSettings = dataclass_field(default_factory=SolverSettings)
    max_workers: int = 1
    with_error_functional: bool = True
    seeds: list[int] = dataclass_field(default_factory=list)


@dataclass
class RateFit:
    """log(error) = slope * log(eps) + intercept."""

    slope: float
    intercept: float
    r_squared: float

    def to_dict(self) -> dict[str, float]:
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared}


def fit_rate(errors: Sequence[float], epsilons: Sequence[float]) -> RateFit:
    """
    Least-squares slope of log(error) against log(eps).

    Raises:
        ConfigError: Fewer than 3 points, mismatched lengths or a nonpositive entry
    """
    err = np.asarray(errors, dtype=float)
    eps = np.asarray(epsilons, dtype=float)
    if err.shape != eps.shape:
        raise ConfigError(f"{err.size} errors for {eps.size} scales", stage="fit_rate")
    if err.size < MIN_FIT_POINTS:
        raise ConfigError(
            f"Rate fit needs at least {MIN_FIT_POINTS} points, got {err.size}",
            stage="fit_rate",
        )
    if np.any(err <= 0) or np.any(eps <= 0) or not np.all(np.isfinite(err)):
        raise ConfigError("Rate fit needs positive finite entries", stage="fit_rate")
    x, y = np.log(eps), np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r_squared)


def _maybe_fit(errors: Sequence[float | None], epsilons: Sequence[float]) -> RateFit | None:
    if len(errors) < MIN_FIT_POINTS or any(e is None or not e > 0 for e in errors):
        return None
    return fit_rate([float(e) for e in errors if e is not None], epsilons)


@dataclass
class EpsilonResult:
    epsilon: float
    l2_error: float
    dual_grad_error: float
    gradient_l2: float
    transform_residual: float
    transform_bound: float
    runtime: float
    functional: ErrorFunctional | None = None
    bound: BoundReport | None = None


@dataclass
class ConvergenceReport:
    """Aligned per-epsilon measurements of one study."""

    epsilons: list[float] = dataclass_field(default_factory=list)
    l2_errors: list[float] = dataclass_field(default_factory=list)
    dual_grad_errors: list[float] = dataclass_field(default_factory=list)
    E_values: list[float | None] = dataclass_field(default_factory=list)
    E_terms: list[dict[str, float]] = dataclass_field(default_factory=list)
    runtimes: list[float] = dataclass_field(default_factory=list)
    transform_residuals: list[float] = dataclass_field(default_factory=list)
    transform_bounds: list[float] = dataclass_field(default_factory=list)
    bounds: list[BoundReport] = dataclass_field(default_factory=list)
    fitted_rates: dict[str, RateFit | None] = dataclass_field(default_factory=dict)
    weak_gradient_verdict: str | None = None
    weak_decay_ratio: float | None = None
    E_decay_ratio: float | None = None
    bound_verdict: str | None = None
    flags: list[str] = dataclass_field(default_factory=list)
    coefficients: dict[str, Any] = dataclass_field(default_factory=dict)
    grid: dict[str, Any] = dataclass_field(default_factory=dict)
    seeds: list[int] = dataclass_field(default_factory=list)
    config_hash: str = ""

    @property
    def transform_ok(self) -> bool:
        return all(
            r <= b for r, b in zip(self.transform_residuals, self.transform_bounds, strict=True)
        )

    @property
    def monotone(self) -> bool:
        """No halving raises the L2 error by more than 5%."""
        return all(
            later <= (1.0 + MONOTONE_SLACK) * earlier
            for earlier, later in zip(self.l2_errors, self.l2_errors[1:], strict=False)
        )

    @staticmethod
    def columns() -> tuple[str, ...]:
        return REPORT_COLUMNS

    @staticmethod
    def column_descriptions() -> dict[str, str]:
        return dict(_COLUMN_DOCS)

    def rows(self) -> list[list[Any]]:
        return [
            [eps, l2, dual, E, rt]
            for eps, l2, dual, E, rt in zip(
                self.epsilons,
                self.l2_errors,
                self.dual_grad_errors,
                self.E_values,
                self.runtimes,
                strict=True,
            )
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilons": list(self.epsilons),
            "l2_errors": list(self.l2_errors),
            "dual_grad_errors": list(self.dual_grad_errors),
            "E_values": list(self.E_values),
            "E_terms": [dict(t) for t in self.E_terms],
            "runtimes": list(self.runtimes),
            "transform_residuals": list(self.transform_residuals),
            "transform_bounds": list(self.transform_bounds),
            "transform_ok": self.transform_ok,
            "bounds": [b.to_dict() for b in self.bounds],
            "bound_verdict": self.bound_verdict,
            "fitted_rates": {
                k: None if v is None else v.to_dict() for k, v in sorted(self.fitted_rates.items())
            },
            "weak_gradient_verdict": self.weak_gradient_verdict,
            "weak_decay_ratio": self.weak_decay_ratio,
            "E_decay_ratio": self.E_decay_ratio,
            "monotone": self.monotone,
            "flags": list(self.flags),
            "coefficients": self.coefficients,
            "grid": self.grid,
            "seeds": list(self.seeds),
            "config_hash": self.config_hash,
        }


def study_grid(spec: StudySpec) -> SpaceTimeGrid:
    """Shared fine grid resolving the smallest eps with ``cells_per_period`` cells."""
    if spec.cells_per_period < 1:
        raise ConfigError(f"cells_per_period must be >= 1, got {spec.cells_per_period}")
    eps_min = min(spec.epsilons)
    width = spec.box[1] - spec.box[0]
    duration = spec.time_interval[1] - spec.time_interval[0]
    nx = spec.nx or math.ceil(width * spec.cells_per_period / eps_min - 1e-9) + 1
    if spec.nt:
        nt = spec.nt
    elif spec.field.time_invariant:
        nt = math.ceil(duration * spec.cells_per_period / eps_min - 1e-9) + 1
    else:
        nt = math.ceil(duration * spec.cells_per_period / eps_min**2 - 1e-9) + 1
    return build_grid(
        spec.field.spatial_dim, spec.box, nx, spec.time_interval, nt, c_par=spec.c_par
    )


def _rss(values) -> float:
    return math.sqrt(sum(v * v for v in values))


class _SharedNorms:
    """Full-grid dual norms behind a lock; the Gram factor is built on first use."""

    def __init__(self, grid: SpaceTimeGrid, max_unknowns: int):
        self.workspace = NormWorkspace(grid, None, max_unknowns=max_unknowns)
        self._lock = threading.Lock()

    def gradient_dual(self, diff: DiscreteField) -> float:
        with self._lock:
            return _rss(self.workspace.dual_norm(g) for g in diff.gradient())

    def error_lhs(self, p_eps_hat: DiscreteField, p0_hat: DiscreteField) -> float:
        with self._lock:
            return error_lhs(p_eps_hat, p0_hat, self.workspace)

    def w1par(self, f: DiscreteField, q: float) -> float:
        with self._lock:
            return w1par_norm(f, q, workspace=self.workspace)


def transform_equivalence(
    p: DiscreteField, p_hat: DiscreteField, Lam: float
) -> tuple[float, float]:
    """||exp(-Lam t) p - p_hat||_L2 and the first-order bound 5 dt Lam ||p||_L2."""
    residual = lp_norm(exp_transform(p, Lam) - p_hat)
    bound = TRANSFORM_FACTOR * p.grid.dt * Lam * lp_norm(p)
    return residual, bound


def _epsilon_task(
    spec: StudySpec,
    grid: SpaceTimeGrid,
    epsilon: float,
    f: DiscreteField,
    p0: DiscreteField,
    p0_hat: DiscreteField,
    f_norm: float,
    norms: _SharedNorms,
    correctors: Sequence[CorrectorSolution],
    coefficients: HomogenizedCoefficients,
) -> EpsilonResult:
    start = time.time()
    study_logger.log_epsilon_start(epsilon)
    stage = "heterogeneous_solve"
    try:
        problem = CauchyDirichletProblem(
            rescale(spec.field, epsilon), grid, f, settings=spec.solver
        )
        p = solve_problem(problem).solution
        p_hat = solve_problem(exp_shifted_problem(problem)).solution

        stage = "norms"
        residual, bound = transform_equivalence(p, p_hat, spec.field.Lam)
        diff = p - p0
        l2_error = lp_norm(diff)
        dual_grad = norms.gradient_dual(diff)
        grad_l2 = lp_norm(DiscreteField(grid, np.sqrt(np.sum(p.gradient() ** 2, axis=0))))

        E = bound_report = None
        if spec.with_error_functional:
            stage = "error_functional"
            E = error_functional(
                spec.field,
                correctors,
                epsilon,
                coefficients,
                spec.error_cells_per_period,
                spec.dual_max_unknowns,
            )
            if f_norm > 0:
                bound_report = bound_check(
                    p_hat,
                    p0_hat,
                    E.total,
                    f_norm,
                    spec.r_list,
                    beta=beta_exponent(spec.delta),
                    epsilon=epsilon,
                    lhs=norms.error_lhs(p_hat, p0_hat),
                )
    except HomogenizationError as exc:
        exc.stage = exc.stage or stage
        exc.context.setdefault("epsilon", epsilon)
        raise
    return EpsilonResult(
        epsilon=epsilon,
        l2_error=l2_error,
        dual_grad_error=dual_grad,
        gradient_l2=grad_l2,
        transform_residual=residual,
        transform_bound=bound,
        runtime=time.time() - start,
        functional=E,
        bound=bound_report,
    )


def run_convergence_study(
    spec: StudySpec,
    coefficients: HomogenizedCoefficients | None = None,
    correctors: Sequence[CorrectorSolution] | None = None,
    config_hash: str = "",
) -> ConvergenceReport:
    """
    Sweep epsilon and compare heterogeneous and homogenized solutions.

    Args:
        spec: Study inputs
        coefficients: Effective coefficients (computed from the correctors if None)
        correctors: Cell-problem solutions (solved if None)
        config_hash: Recorded with the report

    Returns:
        The report; an empty epsilon list gives an empty report

    Raises:
        HomogenizationError: First failing stage, with ``epsilon`` in its context
    """
    epsilons = sorted({float(e) for e in spec.epsilons}, reverse=True)
    report = ConvergenceReport(seeds=list(spec.seeds), config_hash=config_hash)
    if not epsilons:
        logger.warning("Convergence study with an empty epsilon list")
        return report
    start_time = time.time()
    logger.info("=== CONVERGENCE STUDY ===")
    study_logger.log_start("converge", config_hash or "-" * 12, len(epsilons))

    if correctors is None:
        logger.info("=== CORRECTORS ===")
        correctors = solve_correctors(
            spec.field,
            spec.corrector_nx,
            spec.corrector_nt,
            spec.corrector_tol,
            spec.max_periods,
            spec.max_workers,
        )
    coeffs = coefficients or homogenized_coefficients(spec.field, correctors)
    report.coefficients = coeffs.to_dict()

    logger.info("=== HOMOGENIZED SOLVES ===")
    grid = study_grid(spec)
    report.grid = grid.describe()
    f = spec.boundary(grid)
    Lam = spec.field.Lam
    try:
        p0 = solve_homogenized(coeffs, grid, f, settings=spec.solver).solution
        p0_hat = solve_homogenized(
            coeffs, grid, exp_transform(f, Lam), lambda_shift=Lam, settings=spec.solver
        ).solution
    except HomogenizationError as exc:
        exc.stage = exc.stage or "homogenized_solve"
        raise

    norms = _SharedNorms(grid, spec.dual_max_unknowns)
    f_norm = norms.w1par(f, 2.0 + spec.delta)

    logger.info("=== EPSILON SWEEP ===")
    tasks = [
        Task(
            f"epsilon={eps:g}",
            partial(
                _epsilon_task, spec, grid, eps, f, p0, p0_hat, f_norm, norms, correctors, coeffs
            ),
        )
        for eps in epsilons
    ]
    runner = ParallelRunner(spec.max_workers)
    outcomes = run_tasks(tasks, runner=runner)
    for outcome in outcomes:
        if outcome.error is not None:
            study_logger.log_error(outcome.name, str(outcome.error))
            raise outcome.error

    results: list[EpsilonResult] = [o.result for o in outcomes]
    for outcome, res in zip(outcomes, results, strict=True):
        study_logger.log_epsilon_complete(res.epsilon, outcome.worker_id, res.runtime)
        report.epsilons.append(res.epsilon)
        report.l2_errors.append(res.l2_error)
        report.dual_grad_errors.append(res.dual_grad_error)
        report.runtimes.append(res.runtime)
        report.transform_residuals.append(res.transform_residual)
        report.transform_bounds.append(res.transform_bound)
        E = res.functional
        report.E_values.append(None if E is None else E.total)
        report.E_terms.append({} if E is None else E.terms)
        if res.bound is not None:
            report.bounds.append(res.bound)

    _aggregate(report, [r.gradient_l2 for r in results])
    study_logger.log_completion(time.time() - start_time, len(outcomes), 0)
    study_logger.log_stats(runner.get_stats())
    return report


def _aggregate(report: ConvergenceReport, gradient_l2: Sequence[float]) -> None:
    eps = report.epsilons
    report.fitted_rates = {
        "l2_error": _maybe_fit(report.l2_errors, eps),
        "dual_grad_error": _maybe_fit(report.dual_grad_errors, eps),
        "E_total": _maybe_fit(report.E_values, eps),
    }
    report.weak_gradient_verdict, report.weak_decay_ratio = classify_weak_convergence(
        report.dual_grad_errors, gradient_l2, scale=max(gradient_l2)
    )
    totals = [e for e in report.E_values if e is not None]
    if len(totals) >= 2 and all(e > 0 for e in totals):
        report.E_decay_ratio = geometric_ratio(totals)
    if report.bounds:
        report.bound_verdict = bound_sweep_verdict(report.bounds)
    if not report.transform_ok:
        report.flags.append("transform_residual_above_bound")
        logger.warning("Transform-equivalence residual above 5 dt Lam ||p|| for some epsilon")
    if not report.monotone:
        report.flags.append("l2_error_not_monotone")
        logger.warning(f"L2 errors not monotone across halvings: {report.l2_errors}")
    fit = report.fitted_rates["l2_error"]
    if fit is not None:
        logger.info(f"L2 error rate {fit.slope:.3f} (R^2={fit.r_squared:.3f})")


ENSEMBLE_COLUMNS = (
    "epsilon",
    "median_l2_error",
    "iqr_l2_error",
    "median_dual_grad_error",
    "median_E_total",
    "iqr_E_total",
    "n_ok",
)


@dataclass
class EnsembleReport:
    """Per-sample convergence reports and their median/IQR per epsilon."""

    epsilons: list[float]
    seeds: list[int]
    samples: list[ConvergenceReport | None]
    failures: list[dict[str, Any]]
    medians: dict[str, list[float | None]]
    iqrs: dict[str, list[float | None]]
    config_hash: str = ""

    @property
    def n_samples(self) -> int:
        return len(self.seeds)

    @property
    def n_failures(self) -> int:
        return len(self.failures)

    @property
    def n_ok(self) -> int:
        return self.n_samples - self.n_failures

    @staticmethod
    def columns() -> tuple[str, ...]:
        return ENSEMBLE_COLUMNS

    @staticmethod
    def column_descriptions() -> dict[str, str]:
        return {
            "epsilon": _COLUMN_DOCS["epsilon"],
            "median_l2_error": "median over successful samples of l2_error",
            "iqr_l2_error": "interquartile range of l2_error",
            "median_dual_grad_error": "median of dual_grad_error",
            "median_E_total": "median of E(eps)",
            "iqr_E_total": "interquartile range of E(eps)",
            "n_ok": "samples that completed",
        }

    def rows(self) -> list[list[Any]]:
        return [
            [
                eps,
                self.medians["l2_error"][i],
                self.iqrs["l2_error"][i],
                self.medians["dual_grad_error"][i],
                self.medians["E_total"][i],
                self.iqrs["E_total"][i],
                self.n_ok,
            ]
            for i, eps in enumerate(self.epsilons)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilons": list(self.epsilons),
            "seeds": list(self.seeds),
            "n_samples": self.n_samples,
            "n_failures": self.n_failures,
            "failures": list(self.failures),
            "medians": {k: list(v) for k, v in sorted(self.medians.items())},
            "iqrs": {k: list(v) for k, v in sorted(self.iqrs.items())},
            "samples": [None if s is None else s.to_dict() for s in self.samples],
            "config_hash": self.config_hash,
        }


def _median_iqr(values: Sequence[float | None]) -> tuple[float | None, float | None]:
    data = np.array([v for v in values if v is not None], dtype=float)
    if data.size == 0:
        return None, None
    q1, median, q3 = np.percentile(data, [25.0, 50.0, 75.0])
    return float(median), float(q3 - q1)


def _sample_study(
    spec: StudySpec, template: CheckerboardField, L: int, seed: int, config_hash: str
) -> ConvergenceReport:
    realization = template.reseeded(seed).periodize(L)
    sample_spec = dataclasses.replace(spec, field=realization, max_workers=1, seeds=[seed])
    report = run_convergence_study(sample_spec, config_hash=config_hash)
    coeffs = report.coefficients
    logger.debug(
        f"Sample seed={seed}: a_bar={coeffs.get('a_bar')}, "
        f"b_bar={coeffs.get('b_bar')}, d_bar={coeffs.get('d_bar')}"
    )
    return report


def monte_carlo_ensemble(
    spec: StudySpec,
    n_samples: int,
    base_seed: int,
    L: int = 8,
    seeds: Sequence[int] | None = None,
    config_hash: str = "",
) -> EnsembleReport:
    """
    Convergence studies over independent checkerboard realizations.

    Each sample folds its realization onto an L-torus, so it is a periodic
    field with its own correctors and coefficients. Samples run concurrently
    (``spec.max_workers``); failures are collected and the run continues.

    Args:
        spec: Study inputs; ``spec.field`` is the checkerboard template
        n_samples: Realizations (>= 2)
        base_seed: Seed the per-sample seeds derive from
        L: Torus size in cells
        seeds: Explicit per-sample seeds (override ``base_seed``)
        config_hash: Recorded with the report

    Raises:
        ConfigError: Fewer than 2 samples or a non-checkerboard template
    """
    if not isinstance(spec.field, CheckerboardField):
        raise ConfigError(
            f"Ensembles need a checkerboard template, got '{spec.field.kind}'",
            stage="ensemble",
        )
    seed_list = list(seeds) if seeds is not None else sample_seeds(base_seed, n_samples)
    if len(seed_list) < 2:
        raise ConfigError(f"Ensembles need n_samples >= 2, got {len(seed_list)}", stage="ensemble")

    logger.info(f"=== MONTE-CARLO ENSEMBLE ({len(seed_list)} samples) ===")
    start_time = time.time()
    tasks = [
        Task(
            f"sample {i}",
            partial(_sample_study, spec, spec.field, L, seed, config_hash),
        )
        for i, seed in enumerate(seed_list)
    ]
    runner = ParallelRunner(spec.max_workers)
    outcomes = run_tasks(tasks, runner=runner)

    samples: list[ConvergenceReport | None] = []
    failures: list[dict[str, Any]] = []
    for i, outcome in enumerate(outcomes):
        if outcome.error is None:
            samples.append(outcome.result)
            continue
        samples.append(None)
        error = outcome.error
        payload = (
            error.to_dict()
            if isinstance(error, HomogenizationError)
            else {"error": type(error).__name__, "message": str(error)}
        )
        failures.append({"sample_index": i, "seed": seed_list[i], **payload})
        study_logger.log_sample_failure(i, str(error))

    epsilons = sorted({float(e) for e in spec.epsilons}, reverse=True)
    ok = [s for s in samples if s is not None]
    medians: dict[str, list[float | None]] = {}
    iqrs: dict[str, list[float | None]] = {}
    for key, attr in (
        ("l2_error", "l2_errors"),
        ("dual_grad_error", "dual_grad_errors"),
        ("E_total", "E_values"),
    ):
        pairs = [_median_iqr([getattr(s, attr)[i] for s in ok]) for i in range(len(epsilons))]
        medians[key] = [m for m, _ in pairs]
        iqrs[key] = [q for _, q in pairs]

    report = EnsembleReport(
        epsilons=epsilons,
        seeds=seed_list,
        samples=samples,
        failures=failures,
        medians=medians,
        iqrs=iqrs,
        config_hash=config_hash,
    )
    study_logger.log_completion(time.time() - start_time, len(outcomes), report.n_failures)
    study_logger.log_stats(runner.get_stats())
    return report
