"""
Command-line interface: ``parahom <subcommand> --config run.toml``.

Every subcommand loads and validates the configuration, runs its pipeline,
writes the report (CSV with a column sidecar, or JSON) and prints a rich
summary. Failures print a machine-readable JSON error on stdout and exit
with 2 (configuration), 3 (numerical failure) or 4 (output).
"""

import functools
import json
import logging
import sys
import time
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import click
import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from src import __version__
from src.config import RunConfig, load_config
from src.corrector import (
    cell_coefficients,
    corrector_diagnostics,
    homogenized_coefficients,
    rve_estimate,
    sample_seeds,
    solve_correctors,
)
from src.diagnostics import caccioppoli_interior, meyers_probe
from src.errors import FieldBoundError, HomogenizationError
from src.fields import CheckerboardField, CoefficientField, rescale, validate
from src.harness import StudySpec, monte_carlo_ensemble, run_convergence_study
from src.logging_config import get_log_file_path, setup_logging
from src.norms import lp_norm
from src.parabolic_solver import CauchyDirichletProblem, solve_problem
from src.results import Provenance, emit_results
from src.twoscale import TERM_NAMES, error_functional

console = Console()
logger = logging.getLogger(__name__)

_TIMING_KEYS = frozenset({"runtime", "runtimes"})


@dataclass
class Summary:
    """Nested result payload; its CSV form lists the scalar leaves as key/value rows."""

    name: str
    payload: dict[str, Any]
    table: tuple[list[str], list[list[Any]]] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, **self.payload}

    def columns(self) -> list[str]:
        return self.table[0] if self.table else ["key", "value"]

    def rows(self) -> list[list[Any]]:
        if self.table:
            return self.table[1]
        return [[k, v] for k, v in _flatten(self.payload)]


def _flatten(payload: Any, prefix: str = "") -> list[tuple[str, Any]]:
    if isinstance(payload, dict):
        items: list[tuple[str, Any]] = []
        for key in sorted(payload):
            items.extend(_flatten(payload[key], f"{prefix}{key}."))
        return items
    if isinstance(payload, list):
        items = []
        for i, value in enumerate(payload):
            items.extend(_flatten(value, f"{prefix}{i}."))
        return items
    return [(prefix.rstrip("."), payload)]


@dataclass
class _TimingFree:
    """Report view with every runtime replaced by 0.0, for byte-stable reruns."""

    report: Any

    def to_dict(self) -> dict[str, Any]:
        return _scrub(self.report.to_dict())

    def columns(self):
        return self.report.columns()

    def column_descriptions(self):
        return getattr(self.report, "column_descriptions", lambda: {})()

    def rows(self):
        if isinstance(self.report, Summary) and self.report.table is None:
            return [[k, v] for k, v in _flatten(_scrub(self.report.payload))]
        columns = list(self.report.columns())
        drop = {i for i, c in enumerate(columns) if c in _TIMING_KEYS}
        return [[0.0 if i in drop else v for i, v in enumerate(row)] for row in self.report.rows()]


def _scrub(payload: Any) -> Any:
    if isinstance(payload, dict):
        return {
            k: (0.0 if k == "runtime" else [0.0] * len(v) if k == "runtimes" else _scrub(v))
            for k, v in payload.items()
        }
    if isinstance(payload, list):
        return [_scrub(v) for v in payload]
    return payload


@dataclass
class RunContext:
    config: RunConfig
    jobs: int
    out_dir: Path
    fmt: str
    deterministic: bool

    @property
    def provenance(self) -> Provenance:
        return Provenance(self.config.config_hash(), self.config.seeds())

    def build_field(self) -> CoefficientField:
        return self.config.field.build()


def _fail(error: HomogenizationError | Exception) -> None:
    if isinstance(error, HomogenizationError):
        payload, code = error.to_dict(), error.exit_code
    else:
        payload = {"error": type(error).__name__, "message": str(error), "exit_code": 3}
        code = 3
    click.echo(json.dumps(payload, sort_keys=True, default=str))
    sys.exit(code)


def _show(report: Any, paths: list[Path], title: str) -> None:
    columns = list(report.columns()) if hasattr(report, "columns") else []
    rows = report.rows() if hasattr(report, "rows") else []
    if columns and rows and columns != ["key", "value"]:
        table = Table(show_header=True, header_style="bold blue", title=title)
        for column in columns:
            table.add_column(column, style="cyan")
        for row in rows:
            table.add_row(*[f"{v:.6g}" if isinstance(v, float) else str(v) for v in row])
        console.print(table)
    else:
        lines = [f"[bold]{k}:[/bold] {v}" for k, v in rows[:20]]
        console.print(Panel("\n".join(lines) or "(empty)", title=title, border_style="green"))
    for path in paths:
        console.print(f"[green]Written:[/green] {path}")


def run_options(func: Callable) -> Callable:
    """Options shared by every subcommand."""

    @click.option("--config", "config_path", required=True, type=click.Path(exists=True))
    @click.option("--jobs", default=1, type=click.IntRange(min=1), help="Concurrent solves")
    @click.option("--out", "out_dir", type=click.Path(), help="Output directory")
    @click.option("--format", "fmt", type=click.Choice(["csv", "json"]), help="Report format")
    @click.option("--seed", type=int, help="Overrides the seeds of the configuration")
    @click.option(
        "--deterministic",
        is_flag=True,
        help="Write 0.0 for every runtime so reruns are byte-identical",
    )
    @functools.wraps(func)
    def wrapper(config_path, jobs, out_dir, fmt, seed, deterministic):
        name = func.__name__.replace("_cmd", "").replace("_", "-")
        try:
            config = load_config(config_path, seed)
            ctx = RunContext(
                config=config,
                jobs=jobs,
                out_dir=Path(out_dir or config.output.dir),
                fmt=fmt or config.output.format,
                deterministic=deterministic,
            )
            start = time.time()
            logger.info(f"=== {name.upper()} ===")
            report = func(ctx)
            view = _TimingFree(report) if deterministic else report
            paths = emit_results(view, ctx.out_dir, ctx.fmt, ctx.provenance, name=name)
            logger.info(f"Subcommand {name} finished in {time.time() - start:.1f}s")
        except Exception as exc:
            logger.error(f"Subcommand {name} failed: {exc}")
            _fail(exc)
        _show(view, paths, name)

    return wrapper


@click.group()
@click.version_option(__version__, prog_name="parahom")
@click.option(
    "--log-level",
    default="INFO",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]),
    help="Logging level",
)
@click.option("--log-file", type=click.Path(), help="Detailed log file (auto-named if omitted)")
@click.option(
    "--clean-terminal/--verbose-terminal",
    default=True,
    help="Only run milestones on the terminal vs. every message",
)
def main(log_level: str, log_file: str | None, clean_terminal: bool):
    """Parabolic homogenization toolkit."""
    setup_logging(
        log_level=log_level,
        log_file=log_file or get_log_file_path(),
        clean_terminal=clean_terminal,
    )


def _heterogeneous(field_: CoefficientField, epsilon: float) -> CoefficientField:
    return field_ if epsilon >= 1.0 else rescale(field_, epsilon)


@main.command("solve")
@run_options
def solve_cmd(ctx: RunContext) -> Summary:
    """Solve the Cauchy-Dirichlet problem at scale study.epsilon."""
    config = ctx.config
    field_ = ctx.build_field()
    grid = config.grid.build(field_.spatial_dim)
    f = config.boundary.build()(grid)
    scaled = _heterogeneous(field_, config.study.epsilon)
    problem = CauchyDirichletProblem(
        scaled,
        grid,
        f,
        lambda_shift=field_.Lam if config.study.shifted else 0.0,
        settings=config.solver.settings(),
    )
    result = solve_problem(problem)
    trajectory = result.solution.to_npz(ctx.out_dir / "solution.npz")
    return Summary(
        "solve",
        {
            "epsilon": config.study.epsilon,
            "grid": grid.describe(),
            "field": field_.describe(),
            "lambda_shift": problem.lambda_shift,
            "l2_norm": lp_norm(result.solution),
            "max_residual": result.max_residual,
            "iterations": int(sum(result.iterations)),
            "runtime": result.runtime,
            "trajectory": str(trajectory),
        },
    )


def _periodic_field(ctx: RunContext) -> CoefficientField:
    field_ = ctx.build_field()
    if isinstance(field_, CheckerboardField) and field_.period_L is None:
        field_ = field_.periodize(ctx.config.study.ensemble_L)
    return field_


@main.command("corrector")
@run_options
def corrector_cmd(ctx: RunContext) -> Summary:
    """Solve the cell problems of every basis direction."""
    cc = ctx.config.corrector
    field_ = _periodic_field(ctx)
    solutions = solve_correctors(field_, cc.cell_nx, cc.cell_nt, cc.tol, cc.max_periods, ctx.jobs)
    directions = []
    for i, sol in enumerate(solutions):
        path = sol.to_npz(ctx.out_dir / f"corrector_e{i + 1}.npz")
        directions.append(
            {
                "direction": i,
                "residual": sol.residual,
                "periods": sol.periods,
                "runtime": sol.runtime,
                "diagnostics": corrector_diagnostics(sol).to_dict(),
                "file": str(path),
            }
        )
    coeffs = homogenized_coefficients(field_, solutions)
    return Summary("corrector", {"directions": directions, "coefficients": coeffs.to_dict()})


@main.command("homogenize")
@run_options
def homogenize_cmd(ctx: RunContext) -> Summary:
    """Homogenized coefficients: cell problem, or RVE average for random fields."""
    config = ctx.config
    cc = config.corrector
    field_ = ctx.build_field()
    if isinstance(field_, CheckerboardField) and field_.period_L is None:
        coeffs = rve_estimate(
            config.field.to_spec(),
            cc.rve_L,
            cc.rve_samples,
            config.study.base_seed,
            cell_nx=cc.rve_cell_nx,
            cell_nt=cc.cell_nt,
            tol=cc.tol,
            max_periods=cc.max_periods,
            max_workers=ctx.jobs,
        )
    else:
        coeffs = cell_coefficients(field_, cc.cell_nx, cc.cell_nt, cc.tol, cc.max_periods, ctx.jobs)
    return Summary("homogenize", coeffs.to_dict())


@main.command("error-functional")
@run_options
def error_functional_cmd(ctx: RunContext) -> Summary:
    """E(eps) for every scale of study.epsilons."""
    config = ctx.config
    cc = config.corrector
    field_ = _periodic_field(ctx)
    solutions = solve_correctors(field_, cc.cell_nx, cc.cell_nt, cc.tol, cc.max_periods, ctx.jobs)
    coeffs = homogenized_coefficients(field_, solutions)
    rows = []
    for eps in sorted(config.study.epsilons, reverse=True):
        E = error_functional(
            field_,
            solutions,
            eps,
            coeffs,
            config.study.error_cells_per_period,
            config.solver.dual_max_unknowns,
        )
        row = E.to_row()
        rows.append([row[c] for c in ("epsilon", *TERM_NAMES, "total")])
    columns = ["epsilon", *TERM_NAMES, "total"]
    return Summary(
        "error-functional",
        {"rows": [dict(zip(columns, r, strict=True)) for r in rows]},
        table=(columns, rows),
    )


def _study_spec(ctx: RunContext, field_: CoefficientField) -> StudySpec:
    config = ctx.config
    study, grid, cc = config.study, config.grid, config.corrector
    return StudySpec(
        field=field_,
        boundary=config.boundary.build(),
        epsilons=study.epsilons,
        box=grid.box,
        time_interval=(grid.t0, grid.t1),
        cells_per_period=grid.cells_per_period,
        nx=grid.nx,
        nt=grid.nt,
        c_par=grid.c_par,
        corrector_nx=cc.cell_nx,
        corrector_nt=cc.cell_nt,
        corrector_tol=cc.tol,
        max_periods=cc.max_periods,
        error_cells_per_period=study.error_cells_per_period,
        r_list=study.r_list,
        delta=study.delta,
        dual_max_unknowns=config.solver.dual_max_unknowns,
        solver=config.solver.settings(),
        max_workers=ctx.jobs,
        with_error_functional=study.with_error_functional,
        seeds=config.seeds(),
    )


@main.command("converge")
@run_options
def converge_cmd(ctx: RunContext):
    """Epsilon sweep (Monte-Carlo ensemble when study.n_samples >= 2)."""
    study = ctx.config.study
    field_ = ctx.build_field()
    digest = ctx.config.config_hash()
    if isinstance(field_, CheckerboardField) and study.n_samples >= 2:
        return monte_carlo_ensemble(
            _study_spec(ctx, field_),
            study.n_samples,
            study.base_seed,
            L=study.ensemble_L,
            config_hash=digest,
        )
    return run_convergence_study(_study_spec(ctx, _periodic_field(ctx)), config_hash=digest)


def _solved_members(ctx: RunContext, n_samples: int):
    """Shifted heterogeneous problems at diagnostics.epsilon, one per realization."""
    config = ctx.config
    template = ctx.build_field()
    if isinstance(template, CheckerboardField):
        seeds = sample_seeds(config.study.base_seed, n_samples)
        fields = [template.reseeded(s) for s in seeds]
    else:
        seeds, fields = [config.field.seed], [template]
    grid = config.grid.build(template.spatial_dim)
    f = config.boundary.build()(grid)
    members = []
    for seed, field_ in zip(seeds, fields, strict=True):
        problem = CauchyDirichletProblem(
            _heterogeneous(field_, config.diagnostics.epsilon),
            grid,
            f,
            lambda_shift=field_.Lam,
            settings=config.solver.settings(),
        )
        members.append((seed, problem, solve_problem(problem).solution))
    return grid, members


@main.command("diagnose-caccioppoli")
@run_options
def diagnose_caccioppoli_cmd(ctx: RunContext) -> Summary:
    """Interior Caccioppoli constants over radii and realizations."""
    diag = ctx.config.diagnostics
    grid, members = _solved_members(ctx, diag.n_samples)
    center = diag.center or [0.5 * (lo + hi) for lo, hi in grid.box]
    columns = ["seed", "r", "lhs", "rhs", "implied_constant", "sup_time_constant"]
    rows, reports = [], []
    for seed, problem, p in members:
        for r in diag.radii:
            rep = caccioppoli_interior(problem, p, r, center)
            reports.append(rep.to_dict())
            companion = rep.companion.implied_constant if rep.companion else float("nan")
            rows.append([seed, r, rep.lhs, rep.rhs, rep.implied_constant, companion])
    constants = [row[4] for row in rows if np.isfinite(row[4]) and row[4] > 0]
    spread = max(constants) / min(constants) if constants else None
    return Summary(
        "diagnose-caccioppoli",
        {"reports": reports, "constant_spread": spread},
        table=(columns, rows),
    )


@main.command("diagnose-meyers")
@run_options
def diagnose_meyers_cmd(ctx: RunContext) -> Summary:
    """Meyers implied constants per delta over realizations."""
    diag = ctx.config.diagnostics
    _, members = _solved_members(ctx, diag.n_samples)
    report = meyers_probe([(prob, p) for _, prob, p in members], diag.deltas, diag.band)
    columns = ["delta", "max_constant", "min_constant", "max_grad_norm"]
    rows = [
        [
            delta,
            max(report.constants[delta]),
            min(report.constants[delta]),
            max(report.grad_norms[delta]),
        ]
        for delta in [0.0, *report.deltas]
    ]
    return Summary("diagnose-meyers", report.to_dict(), table=(columns, rows))


@main.command("validate-field")
@run_options
def validate_field_cmd(ctx: RunContext) -> Summary:
    """Construct the field (checking its bounds) and spot-check random samples."""
    report = validate(ctx.build_field(), rng_seed=ctx.config.field.seed)
    if not report.passed:
        raise FieldBoundError(
            f"Field violates {', '.join(report.violations)}",
            report.violations[0],
            stage="validate",
        )
    return Summary("validate-field", report.to_dict())


if __name__ == "__main__":
    main()
