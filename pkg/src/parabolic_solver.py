"""Implicit finite-difference solver for the Cauchy-Dirichlet problem

    dt p - div(a grad p) - b . grad p - d p + Lambda_shift p = h   in U x I
    p = f                                                       on the parabolic boundary

Implicit Euler in time. The diffusion term uses a sampled at flux faces at
the new time level, b . grad p uses centered differences, and Dirichlet values
are imposed strongly at boundary nodes. The mass matrix is the identity.

Classes:
    CauchyDirichletProblem: Data of one solve
    StepSystem: Linear system of one time step
    SolveResult: Trajectory plus per-step solver statistics

Example:
    >>> grid = build_grid(1, (0.0, 1.0), 65, (0.0, 0.25), 2049)
    >>> f = DiscreteField.from_function(grid, lambda x, t: x)
    >>> result = solve_problem(CauchyDirichletProblem(make_constant(1.0), grid, f))
"""

import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from dataclasses import field as dataclass_field
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse as sp

from src.errors import (
    ConfigError,
    FieldBoundError,
    HomogenizationError,
    ResolutionError,
)
from src.fields import ELLIPTICITY, CoefficientField, make_constant
from src.linalg import (
    SolverSettings,
    assemble_csr,
    is_symmetric,
    solve_direct_banded,
    solve_iterative,
)
from src.mesh import DiscreteField, SpaceTimeGrid

if TYPE_CHECKING:
    from src.corrector import HomogenizedCoefficients

logger = logging.getLogger(__name__)

# Slack on the face re-check; homogenized matrices are accepted within it.
ELLIPTICITY_SLACK = 0.02
MAX_PECLET = 2.0


@dataclass
class CauchyDirichletProblem:
    """Data of one Cauchy-Dirichlet solve.

    Attributes:
        field: Coefficient field (possibly rescaled)
        grid: Space-time grid
        boundary_data: f, read on the lateral boundary and at the initial level
        source: h, zero when omitted
        lambda_shift: 0 or the field's Lam
        settings: Linear solver tolerances
    """

    field: CoefficientField
    grid: SpaceTimeGrid
    boundary_data: DiscreteField
    source: DiscreteField | None = None
    lambda_shift: float = 0.0
    settings: SolverSettings = dataclass_field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.boundary_data.grid != self.grid:
            raise ConfigError("Boundary data lives on a different grid", stage="solve")
        if self.source is not None and self.source.grid != self.grid:
            raise ConfigError("Source lives on a different grid", stage="solve")
        if self.field.spatial_dim != self.grid.spatial_dim:
            raise ConfigError(
                f"Field dimension {self.field.spatial_dim} != grid dimension "
                f"{self.grid.spatial_dim}",
                stage="solve",
            )
        if self.lambda_shift != 0.0 and not math.isclose(
            self.lambda_shift, self.field.Lam, rel_tol=1e-12
        ):
            raise ConfigError(
                f"lambda_shift must be 0 or Lam={self.field.Lam}, got {self.lambda_shift}",
                stage="solve",
            )


@dataclass
class StepSystem:
    """((1/dt) I + A^n) p^{n+1} = rhs on the interior unknowns."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    symmetric: bool


@dataclass
class SolveResult:
    solution: DiscreteField
    iterations: list[int] = dataclass_field(default_factory=list)
    max_residual: float = 0.0
    runtime: float = 0.0


@dataclass
class _Stencil:
    matrix: sp.csr_matrix
    ghost_rows: np.ndarray
    ghost_nodes: tuple[np.ndarray, ...]
    ghost_coef: np.ndarray
    symmetric: bool


class _StepAssembler:
    """Builds per-level stencils; reuses them when the field is time invariant."""

    def __init__(self, problem: CauchyDirichletProblem):
        self.problem = problem
        grid = problem.grid
        self.grid = grid
        self.dim = grid.spatial_dim
        self.interior = (slice(1, -1),) * self.dim
        self.interior_shape = (grid.nx - 2,) * self.dim
        self.nodes = np.stack(grid.spatial_coordinates(), axis=-1)
        self.node_index = tuple(i + 1 for i in np.indices(self.interior_shape))
        self._cached: _Stencil | None = None

    def stencil(self, level: int) -> _Stencil:
        if self.problem.field.time_invariant:
            if self._cached is None:
                self._cached = self._build(level)
            return self._cached
        return self._build(level)

    def _sample(self, points: np.ndarray, t: float):
        s = np.full(points.shape[:-1], t)
        return self.problem.field.sample(points, s)

    def _check_faces(self, a_face: np.ndarray, level: int) -> None:
        lam = self.problem.field.lam
        lo, hi = float(a_face.min()), float(a_face.max())
        if lo < 1.0 - ELLIPTICITY_SLACK or hi > lam + ELLIPTICITY_SLACK:
            raise FieldBoundError(
                f"Face coefficient range [{lo:.4g}, {hi:.4g}] outside [1, {lam:g}]",
                ELLIPTICITY,
                stage="assembly",
                time_level=level,
            )

    def _build(self, level: int) -> _Stencil:
        grid, problem, dim = self.grid, self.problem, self.dim
        h, nx = grid.h, grid.nx
        t = grid.time(level)
        a_n, b_n, d_n = self._sample(self.nodes, t)

        entries: list[tuple[tuple[int, ...], np.ndarray]] = []
        diag = np.full(self.interior_shape, 1.0 / grid.dt)
        diag = diag - d_n[self.interior] + problem.lambda_shift
        b_int = b_n[self.interior]
        a_min = np.inf

        for k in range(dim):
            face_sl = [slice(None)] * dim
            face_sl[k] = slice(0, nx - 1)
            shift = np.zeros(dim)
            shift[k] = 0.5 * h
            a_face = self._sample(self.nodes[tuple(face_sl)] + shift, t)[0][..., k, k]
            self._check_faces(a_face, level)
            a_min = min(a_min, float(a_face.min()))

            minus = [slice(1, -1)] * dim
            plus = [slice(1, -1)] * dim
            minus[k] = slice(0, nx - 2)
            plus[k] = slice(1, nx - 1)
            a_minus = a_face[tuple(minus)]
            a_plus = a_face[tuple(plus)]
            diag = diag + (a_minus + a_plus) / h**2

            e_k = tuple(int(j == k) for j in range(dim))
            neg_k = tuple(-int(j == k) for j in range(dim))
            entries.append((e_k, -a_plus / h**2 - b_int[..., k] / (2 * h)))
            entries.append((neg_k, -a_minus / h**2 + b_int[..., k] / (2 * h)))

        if dim == 2:
            a12, a21 = a_n[..., 0, 1], a_n[..., 1, 0]
            if np.any(a12 != 0.0) or np.any(a21 != 0.0):
                q = 4 * h**2
                east, west = a12[2:, 1:-1], a12[:-2, 1:-1]
                north, south = a21[1:-1, 2:], a21[1:-1, :-2]
                entries.append(((1, 1), -(east + north) / q))
                entries.append(((-1, -1), -(west + south) / q))
                entries.append(((1, -1), (east + south) / q))
                entries.append(((-1, 1), (west + north) / q))

        b_max = float(np.abs(b_int).max()) if b_int.size else 0.0
        peclet = b_max * h / a_min
        if peclet >= MAX_PECLET:
            raise ResolutionError(
                f"Mesh Peclet number {peclet:.3g} >= {MAX_PECLET}; refine the grid",
                stage="assembly",
                h=h,
            )

        entries.append(((0,) * dim, diag))
        return self._to_stencil(entries)

    def _to_stencil(self, entries) -> _Stencil:
        nx, dim = self.grid.nx, self.dim
        n = int(np.prod(self.interior_shape))
        rows_all = np.ravel_multi_index(
            tuple(i - 1 for i in self.node_index), self.interior_shape
        ).ravel()
        rows, cols, vals = [], [], []
        g_rows, g_nodes, g_coef = [], [[] for _ in range(dim)], []
        for offset, coef in entries:
            nb = [self.node_index[k] + offset[k] for k in range(dim)]
            inside = np.ones(self.interior_shape, dtype=bool)
            for k in range(dim):
                inside &= (nb[k] >= 1) & (nb[k] <= nx - 2)
            inside_flat = inside.ravel()
            coef_flat = np.broadcast_to(coef, self.interior_shape).ravel()
            rows.append(rows_all[inside_flat])
            cols.append(
                np.ravel_multi_index(
                    tuple(nb[k][inside] - 1 for k in range(dim)), self.interior_shape
                )
            )
            vals.append(coef_flat[inside_flat])
            g_rows.append(rows_all[~inside_flat])
            for k in range(dim):
                g_nodes[k].append(nb[k][~inside])
            g_coef.append(coef_flat[~inside_flat])

        matrix = assemble_csr(
            np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n
        )
        return _Stencil(
            matrix=matrix,
            ghost_rows=np.concatenate(g_rows),
            ghost_nodes=tuple(np.concatenate(g) for g in g_nodes),
            ghost_coef=np.concatenate(g_coef),
            symmetric=is_symmetric(matrix),
        )

    def system(self, level: int, previous: np.ndarray) -> StepSystem:
        problem, grid = self.problem, self.grid
        st = self.stencil(level)
        rhs = previous[self.interior].ravel() / grid.dt
        if problem.source is not None:
            rhs = rhs + problem.source.values[level][self.interior].ravel()
        boundary = problem.boundary_data.values[level]
        np.add.at(rhs, st.ghost_rows, -st.ghost_coef * boundary[st.ghost_nodes])
        return StepSystem(matrix=st.matrix, rhs=rhs, symmetric=st.symmetric)


def assemble_step(
    problem: CauchyDirichletProblem,
    time_level: int,
    previous: np.ndarray | None = None,
) -> StepSystem:
    """
    Assemble the implicit Euler system for the step into ``time_level``.

    Args:
        problem: Problem data
        time_level: Level n+1 >= 1 being solved for
        previous: Nodal values at level n, the boundary data by default

    Returns:
        Interior system with boundary couplings moved to the right side

    Raises:
        FieldBoundError: Face coefficient outside the ellipticity range
        ResolutionError: Mesh Peclet number >= 2
    """
    if not 1 <= time_level < problem.grid.nt:
        raise ConfigError(f"Time level {time_level} outside 1..{problem.grid.nt - 1}")
    if previous is None:
        previous = problem.boundary_data.values[time_level - 1]
    return _StepAssembler(problem).system(time_level, previous)


def _solve_system(
    system: StepSystem, settings: SolverSettings, dim: int, x0: np.ndarray
) -> tuple[np.ndarray, int, float]:
    if system.rhs.size == 0:
        return system.rhs.copy(), 0, 0.0
    if dim == 1:
        x = solve_direct_banded(system.matrix, system.rhs)
        norm = float(np.linalg.norm(system.rhs))
        res = float(np.linalg.norm(system.rhs - system.matrix @ x))
        return x, 0, res / norm if norm > 0 else res
    method = "cg" if system.symmetric else "bicgstab"
    return solve_iterative(
        system.matrix,
        system.rhs,
        method=method,
        tol=settings.tol,
        max_iter=settings.max_iter,
        x0=x0,
        restarts=settings.restarts,
    )


def solve_problem(problem: CauchyDirichletProblem) -> SolveResult:
    """
    March the implicit Euler scheme over all time levels.

    Returns:
        Trajectory equal to f at the initial level and on boundary nodes, with
        iteration counts and the largest relative step residual

    Raises:
        HomogenizationError: Any step failure (solver, bounds or resolution),
            with ``time_level`` in its context
    """
    grid = problem.grid
    start = time.perf_counter()
    assembler = _StepAssembler(problem)
    values = np.empty(grid.shape)
    values[0] = problem.boundary_data.values[0]
    interior = assembler.interior
    iterations: list[int] = []
    max_residual = 0.0

    for n in range(1, grid.nt):
        try:
            system = assembler.system(n, values[n - 1])
            x, iters, res = _solve_system(
                system, problem.settings, grid.spatial_dim, values[n - 1][interior].ravel()
            )
        except HomogenizationError as exc:
            exc.context.setdefault("time_level", n)
            exc.stage = exc.stage or "solve"
            logger.error(f"Solve failed at time level {n}: {exc.message}")
            raise
        values[n] = problem.boundary_data.values[n]
        values[n][interior] = x.reshape(assembler.interior_shape)
        iterations.append(iters)
        max_residual = max(max_residual, res)

    result = SolveResult(
        solution=DiscreteField(grid, values),
        iterations=iterations,
        max_residual=max_residual,
        runtime=time.perf_counter() - start,
    )
    logger.debug(
        f"Solve finished: {grid.nt - 1} steps, max residual {result.max_residual:.2e}, "
        f"{sum(result.iterations)} Krylov iterations, {result.runtime:.2f}s"
    )
    return result


def solve_homogenized(
    coeffs: "HomogenizedCoefficients",
    grid: SpaceTimeGrid,
    f: DiscreteField,
    lambda_shift: float = 0.0,
    source: DiscreteField | None = None,
    settings: SolverSettings | None = None,
) -> SolveResult:
    """Solve with the constant homogenized coefficients (symmetric part of a_bar)."""
    problem = CauchyDirichletProblem(
        field=coeffs.as_field(),
        grid=grid,
        boundary_data=f,
        source=source,
        lambda_shift=lambda_shift,
        settings=settings or SolverSettings(),
    )
    return solve_problem(problem)


def exp_transform(field: DiscreteField, Lambda: float) -> DiscreteField:
    """Multiply level n by exp(-Lambda t^n); ``Lambda -> -Lambda`` inverts it."""
    factors = np.exp(-Lambda * field.grid.times())
    shape = (-1,) + (1,) * field.grid.spatial_dim
    return DiscreteField(field.grid, field.values * factors.reshape(shape))


def exp_shifted_problem(problem: CauchyDirichletProblem) -> CauchyDirichletProblem:
    """
    Problem solved by exp(-Lam t) p when ``problem`` is unshifted.

    Boundary data and source are transformed and the +Lam p term switched on.
    """
    if problem.lambda_shift != 0.0:
        raise ConfigError("Problem is already shifted", stage="transform")
    Lam = problem.field.Lam
    source = None if problem.source is None else exp_transform(problem.source, Lam)
    return CauchyDirichletProblem(
        field=problem.field,
        grid=problem.grid,
        boundary_data=exp_transform(problem.boundary_data, Lam),
        source=source,
        lambda_shift=Lam,
        settings=problem.settings,
    )


def pde_residual(problem: CauchyDirichletProblem, solution: DiscreteField) -> float:
    """
    Largest relative residual ||rhs - A p^{n+1}|| / ||rhs|| of a trajectory.

    Boundary and initial mismatches with ``problem.boundary_data`` count as
    infinite residual.
    """
    grid = problem.grid
    if solution.grid != grid:
        raise ConfigError("Solution lives on a different grid", stage="residual")
    assembler = _StepAssembler(problem)
    bmask = grid.boundary_mask()
    f = problem.boundary_data.values
    if not np.allclose(solution.values[0], f[0], rtol=0.0, atol=1e-12):
        return math.inf
    if not np.allclose(solution.values[:, bmask], f[:, bmask], rtol=0.0, atol=1e-12):
        return math.inf
    worst = 0.0
    for n in range(1, grid.nt):
        system = assembler.system(n, solution.values[n - 1])
        x = solution.values[n][assembler.interior].ravel()
        res = float(np.linalg.norm(system.rhs - system.matrix @ x))
        norm = float(np.linalg.norm(system.rhs))
        worst = max(worst, res / norm if norm > 0 else res)
    return worst


def manufactured_source(
    grid: SpaceTimeGrid,
    time_derivative: Callable[..., np.ndarray],
    gradient: Callable[..., Sequence[np.ndarray]],
    hessian: Callable[..., Sequence[Sequence[np.ndarray]]],
    value: Callable[..., np.ndarray],
    a: float | np.ndarray,
    b: float | Sequence[float] | None = None,
    d: float = 0.0,
    lambda_shift: float = 0.0,
) -> DiscreteField:
    """
    Source h = dt p - a : D^2 p - b . grad p - d p + Lambda_shift p for an exact
    solution p and constant coefficients.

    All callables take ``(x1[, x2], t)`` nodal arrays.
    """
    dim = grid.spatial_dim
    a_m = make_constant(a, b, d, spatial_dim=dim, check=False)
    t, *xs = grid.coordinates()
    grad = gradient(*xs, t)
    hess = hessian(*xs, t)
    h = np.asarray(time_derivative(*xs, t), dtype=float).copy()
    for k in range(dim):
        h = h - a_m.b0[k] * grad[k]
        for m in range(dim):
            h = h - a_m.a0[k, m] * hess[k][m]
    p = np.asarray(value(*xs, t), dtype=float)
    h = h + (lambda_shift - a_m.d0) * p
    return DiscreteField(grid, np.broadcast_to(h, grid.shape).copy())
