"""Space-time correctors and homogenized coefficients.

The corrector of a direction xi solves

    dt phi = div(a (xi + grad phi))

on the spatial torus of the field's period (L for periodized checkerboards)
over one time period. Unknowns sit at nodes; the flux component k lives on
the face between node j and j + e_k, where a is sampled. Mixed gradient
components on a face average the central differences of its two nodes, so
the discrete divergence of every flux telescopes and the cell average of the
corrector gradient vanishes exactly.

Time-invariant fields are solved as one steady problem. Time-periodic fields
are marched period after period from phi = 0 until the period map reaches a
fixed point. In both cases the space-time mean is subtracted at the end.

Classes:
    CellProblem: Field, direction and cell resolution
    CorrectorSolution: Corrector, face gradients and fluxes over one period
    HomogenizedCoefficients: Effective (a_bar, b_bar, d_bar) with standard errors
    CorrectorDiagnostics: Mean, gradient mean and sublinearity report

Example:
    >>> field = make_laminate([1.0, 4.0])
    >>> solution = solve_cell_problem(CellProblem(field, 0, cell_nx=512))
    >>> coeffs = homogenized_coefficients(field, [solution])
    >>> coeffs.a_bar
    array([[1.6]])
"""

import csv
import logging
import math
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from dataclasses import field as dataclass_field
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from src.errors import (
    ConfigError,
    ConvergenceError,
    FieldBoundError,
    HomogenizationError,
    ResolutionError,
    SolverError,
)
from src.fields import (
    BOUND_TOL,
    D_SIGN,
    ELLIPTICITY,
    CheckerboardField,
    CoefficientField,
    CoefficientFieldFactory,
    ConstantField,
    cell_hash,
)
from src.linalg import SparseFactor
from src.mesh import DEFAULT_C_PAR
from src.parabolic_solver import ELLIPTICITY_SLACK
from src.parallel import Task, run_tasks

logger = logging.getLogger(__name__)

DEFAULT_CELL_NX = 32
DEFAULT_TOL = 1e-10
DEFAULT_MAX_PERIODS = 50
SUBLINEARITY_RADII = (2.0, 4.0, 8.0, 16.0)

_SEED_STREAM = 7
_LATTICE_MAX = 512
_LATTICE_BUDGET = 1 << 22
_FACTOR_CACHE_LIMIT = 4_000_000
_SAMPLE_CHUNK = 1 << 20


@dataclass
class CellProblem:
    """
    One corrector cell problem.

    Attributes:
        field: Field periodic in space and time (periodize random fields first)
        direction: Basis index 0..d-1 or an arbitrary nonzero vector
        cell_nx: Nodes per unit length
        cell_nt: Time steps per unit time; None gives dt <= c_par h^2
        c_par: Parabolic resolution constant
    """

    field: CoefficientField
    direction: int | Sequence[float] = 0
    cell_nx: int = DEFAULT_CELL_NX
    cell_nt: int | None = None
    c_par: float = DEFAULT_C_PAR

    def __post_init__(self):
        period = self.field.spatial_period
        if period is None or self.field.temporal_period is None:
            raise ConfigError(
                f"Cell problems need a periodic field, got a non-periodic "
                f"{self.field.kind} field (periodize it first)",
                stage="corrector",
            )
        if period < 1.0 or abs(period - round(period)) > 1e-12:
            raise ConfigError(
                f"Cell period must be a positive integer, got {period}", stage="corrector"
            )
        if self.cell_nx < 2:
            raise ResolutionError(
                f"cell_nx must be >= 2, got {self.cell_nx}", stage="corrector"
            )
        if self.cell_nt is not None and self.cell_nt < 1:
            raise ConfigError(f"cell_nt must be >= 1, got {self.cell_nt}", stage="corrector")
        self.xi = self._direction_vector()
        if not self.steady and self.field.constant_diffusion is None:
            if self.dt > self.c_par * self.h**2 * (1.0 + 1e-9):
                raise ResolutionError(
                    f"Cell time step {self.dt:.3g} exceeds c_par h^2 = "
                    f"{self.c_par * self.h**2:.3g}",
                    stage="corrector",
                    cell_nx=self.cell_nx,
                    cell_nt=self.cell_nt,
                )

    def _direction_vector(self) -> np.ndarray:
        dim = self.field.spatial_dim
        if isinstance(self.direction, (int, np.integer)):
            if not 0 <= self.direction < dim:
                raise ConfigError(
                    f"Direction index {self.direction} outside 0..{dim - 1}",
                    stage="corrector",
                )
            return np.eye(dim)[int(self.direction)]
        xi = np.asarray(self.direction, dtype=float).reshape(-1)
        if xi.shape != (dim,) or not np.any(xi):
            raise ConfigError(
                f"Direction must be a nonzero vector of length {dim}", stage="corrector"
            )
        return xi

    @property
    def spatial_dim(self) -> int:
        return self.field.spatial_dim

    @property
    def period_L(self) -> int:
        return int(round(self.field.spatial_period or 1.0))

    @property
    def n(self) -> int:
        """Nodes per axis on the torus."""
        return self.cell_nx * self.period_L

    @property
    def h(self) -> float:
        return self.period_L / self.n

    @property
    def temporal_period(self) -> float:
        return float(self.field.temporal_period or 1.0)

    @property
    def steady(self) -> bool:
        return self.field.time_invariant

    @property
    def n_steps(self) -> int:
        T = self.temporal_period
        if self.cell_nt is not None:
            return max(1, round(self.cell_nt * T))
        return max(1, math.ceil(T / (self.c_par * self.h**2) - 1e-9))

    @property
    def dt(self) -> float:
        return self.temporal_period / self.n_steps


class _TorusCell:
    """Periodic difference operators and face sampling of one cell problem."""

    def __init__(self, problem: CellProblem):
        self.problem = problem
        dim, n, h = problem.spatial_dim, problem.n, problem.h
        self.dim, self.n, self.h = dim, n, h
        self.n_nodes = n**dim

        shift_1d = sp.csr_matrix(
            (np.ones(n), (np.arange(n), (np.arange(n) + 1) % n)), shape=(n, n)
        )
        eye_1d = sp.identity(n, format="csr")
        eye = sp.identity(self.n_nodes, format="csr")
        self.shift = []
        for k in range(dim):
            s = sp.identity(1, format="csr")
            for m in range(dim):
                s = sp.kron(s, shift_1d if m == k else eye_1d, format="csr")
            self.shift.append(s)
        self.forward = [(s - eye) / h for s in self.shift]
        self.div = [((eye - s.T) / h).tocsr() for s in self.shift]
        self.central = [((s - s.T) / (2 * h)).tocsr() for s in self.shift]
        self.average = [(eye + s) / 2 for s in self.shift]

        axis = np.arange(n) * h
        grids = np.meshgrid(*([axis] * dim), indexing="ij")
        self.nodes = np.stack(grids, axis=-1).reshape(-1, dim)

    def gradient(self, k: int, j: int) -> sp.csr_matrix:
        """Component j of the gradient on faces of direction k."""
        if j == k:
            return self.forward[k]
        return (self.average[k] @ self.central[j]).tocsr()

    def face_coefficients(self, t: float) -> list[np.ndarray]:
        field_ = self.problem.field
        s = np.full(self.n_nodes, t)
        faces = []
        for k in range(self.dim):
            offset = np.zeros(self.dim)
            offset[k] = 0.5 * self.h
            a = field_.sample(self.nodes + offset, s)[0]
            diag = a[:, k, k]
            lo, hi = float(diag.min()), float(diag.max())
            if lo < 1.0 - ELLIPTICITY_SLACK or hi > field_.lam + ELLIPTICITY_SLACK:
                raise FieldBoundError(
                    f"Cell face coefficient range [{lo:.4g}, {hi:.4g}] outside "
                    f"[1, {field_.lam:g}]",
                    ELLIPTICITY,
                    stage="corrector",
                    time=t,
                )
            faces.append(a)
        return faces

    def operator(
        self, a_faces: list[np.ndarray], xi: np.ndarray
    ) -> tuple[sp.csr_matrix, np.ndarray]:
        """L and S with div(a (xi + grad phi)) = L phi + S."""
        L = sp.csr_matrix((self.n_nodes, self.n_nodes))
        source = np.zeros(self.n_nodes)
        for k in range(self.dim):
            inner = None
            for j in range(self.dim):
                coef = a_faces[k][:, k, j]
                if not np.any(coef):
                    continue
                term = sp.diags(coef) @ self.gradient(k, j)
                inner = term if inner is None else inner + term
            if inner is not None:
                L = L + self.div[k] @ inner
            source += self.div[k] @ (a_faces[k][:, k, :] @ xi)
        return L.tocsr(), source

    def flux(self, a_faces: list[np.ndarray], phi: np.ndarray, xi: np.ndarray) -> np.ndarray:
        out = np.empty((self.dim, self.n_nodes))
        for k in range(self.dim):
            total = a_faces[k][:, k, :] @ xi
            for j in range(self.dim):
                coef = a_faces[k][:, k, j]
                if np.any(coef):
                    total = total + coef * (self.gradient(k, j) @ phi)
            out[k] = total
        return out

    def l2(self, values: np.ndarray) -> float:
        return math.sqrt(self.h**self.dim * float(np.sum(values**2)))


def _steady_solve(cell: _TorusCell, xi: np.ndarray) -> tuple[np.ndarray, float]:
    L, source = cell.operator(cell.face_coefficients(0.0), xi)
    # Row 0 pins phi_0 = 0; it holds anyway since 1^T L = 0 and 1^T S = 0.
    keep = np.ones(cell.n_nodes)
    keep[0] = 0.0
    pin = sp.csr_matrix(([1.0], ([0], [0])), shape=L.shape)
    matrix = sp.diags(keep) @ (-L) + pin
    rhs = source.copy()
    rhs[0] = 0.0
    phi = SparseFactor(matrix).solve(rhs)
    return phi, cell.l2(L @ phi + source)


def _march(
    cell: _TorusCell, xi: np.ndarray, tol: float, max_periods: int
) -> tuple[np.ndarray, float, int]:
    problem = cell.problem
    n_steps, dt = problem.n_steps, problem.dt
    identity = sp.identity(cell.n_nodes, format="csr")
    cache: list[tuple[SparseFactor, np.ndarray] | None] | None = None
    if cell.n_nodes * n_steps <= _FACTOR_CACHE_LIMIT:
        cache = [None] * n_steps

    phi = np.zeros(cell.n_nodes)
    levels = np.empty((n_steps, cell.n_nodes))
    gap = math.inf
    for period in range(1, max_periods + 1):
        start = phi.copy()
        for m in range(n_steps):
            entry = cache[m] if cache is not None else None
            if entry is None:
                L, source = cell.operator(cell.face_coefficients((m + 1) * dt), xi)
                entry = (SparseFactor(identity / dt - L), source)
                if cache is not None:
                    cache[m] = entry
            factor, source = entry
            phi = factor.solve(phi / dt + source)
            levels[m] = phi
        gap = cell.l2(phi - start)
        logger.debug(f"Corrector period {period}: fixed-point gap {gap:.3e}")
        if gap <= tol:
            return levels, gap, period
    raise ConvergenceError(
        f"Corrector period map did not reach tol={tol:g} in {max_periods} periods",
        last_residual=gap,
        iterations=max_periods,
        stage="corrector",
    )


@dataclass(eq=False)
class CorrectorSolution:
    """
    Corrector over one time period on the torus.

    Arrays are indexed ``[level, ...]`` over the stored levels ``times``
    (t_1..t_N of the period, or a single level for steady correctors);
    spatial axes follow ``ij`` order.

    Attributes:
        problem: Cell problem that was solved
        phi: Nodal values, mean zero
        grad_phi: Forward differences, component k on the faces of direction k
        flux: a (xi + grad phi), component k on the faces of direction k
        times: Times of the stored levels
        residual: Period-map fixed-point gap, or the steady residual
        mean: Space-time mean of ``phi`` after normalization
        periods: Periods marched (0 for steady or trivial correctors)
    """

    problem: CellProblem
    phi: np.ndarray
    grad_phi: np.ndarray
    flux: np.ndarray
    times: np.ndarray
    residual: float
    mean: float
    periods: int = 0
    runtime: float = 0.0
    _interpolators: dict[str, RegularGridInterpolator] = dataclass_field(
        default_factory=dict, init=False, repr=False
    )

    @property
    def spatial_dim(self) -> int:
        return self.problem.spatial_dim

    @property
    def time_invariant(self) -> bool:
        return self.phi.shape[0] == 1

    @property
    def xi(self) -> np.ndarray:
        return self.problem.xi

    def _spatial_axes(self, leading: int = 1) -> tuple[int, ...]:
        return tuple(range(leading, leading + self.spatial_dim))

    def nodal_gradient(self) -> np.ndarray:
        """Central-difference gradient at nodes, shape ``(levels, *spatial, d)``."""
        h = self.problem.h
        comps = [
            (np.roll(self.phi, -1, axis=k) - np.roll(self.phi, 1, axis=k)) / (2 * h)
            for k in self._spatial_axes()
        ]
        return np.stack(comps, axis=-1)

    def _interpolator(self, key: str) -> RegularGridInterpolator:
        if key in self._interpolators:
            return self._interpolators[key]
        values = self.phi if key == "phi" else self.nodal_gradient()
        for axis in self._spatial_axes():
            values = np.concatenate([values, np.take(values, [0], axis=axis)], axis=axis)
        n, h = self.problem.n, self.problem.h
        axes = [np.arange(n + 1) * h] * self.spatial_dim
        if self.time_invariant:
            interp = RegularGridInterpolator(tuple(axes), values[0])
        else:
            t_ext = np.concatenate([[0.0], self.times])
            values = np.concatenate([values[-1:], values], axis=0)
            interp = RegularGridInterpolator((t_ext, *axes), values)
        self._interpolators[key] = interp
        return interp

    def _points(self, y: np.ndarray, s: Any) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.spatial_dim:
            raise ConfigError(f"Points must have trailing dimension {self.spatial_dim}")
        top = self.problem.n * self.problem.h
        ys = np.clip(np.mod(y, self.problem.period_L), 0.0, top)
        if self.time_invariant:
            return ys
        s = np.broadcast_to(np.asarray(s, dtype=float), y.shape[:-1])
        ss = np.clip(np.mod(s, self.problem.temporal_period), 0.0, self.times[-1])
        return np.concatenate([ss[..., np.newaxis], ys], axis=-1)

    def evaluate(self, y: np.ndarray, s: Any = 0.0) -> np.ndarray:
        """Periodic multilinear interpolation of phi at points ``(..., d)``."""
        return self._interpolator("phi")(self._points(y, s))

    def gradient_at(self, y: np.ndarray, s: Any = 0.0) -> np.ndarray:
        """Interpolated nodal gradient, shape ``(..., d)``."""
        return self._interpolator("grad")(self._points(y, s))

    def divergence_residual(self) -> float:
        """max |dt phi - div flux| over nodes and levels inside the period."""
        h = self.problem.h
        div = np.zeros_like(self.phi)
        for k, axis in enumerate(self._spatial_axes()):
            fk = self.flux[:, k]
            div += (fk - np.roll(fk, 1, axis=axis)) / h
        if self.time_invariant:
            return float(np.max(np.abs(div)))
        dphi = np.diff(self.phi, axis=0) / self.problem.dt
        return float(np.max(np.abs(dphi - div[1:]), initial=0.0))

    def to_npz(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(
            path,
            phi=self.phi,
            grad_phi=self.grad_phi,
            flux=self.flux,
            times=self.times,
            direction=self.xi,
            h=self.problem.h,
            period_L=self.problem.period_L,
        )
        return path

    def to_csv(self, path: str | Path) -> Path:
        """Write one row per node and level: ``t, y1[, y2], phi``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        axis = np.arange(self.problem.n) * self.problem.h
        grids = np.meshgrid(self.times, *([axis] * self.spatial_dim), indexing="ij")
        header = ["t"] + [f"y{k + 1}" for k in range(self.spatial_dim)] + ["phi"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in zip(*(g.ravel() for g in grids), self.phi.ravel(), strict=True):
                writer.writerow([repr(float(v)) for v in row])
        return path


def solve_cell_problem(
    problem: CellProblem,
    tol: float = DEFAULT_TOL,
    max_periods: int = DEFAULT_MAX_PERIODS,
) -> CorrectorSolution:
    """
    Solve the corrector cell problem.

    Args:
        problem: Field, direction and resolution
        tol: Fixed-point gap ||phi(T) - phi(0)||_2 required between periods
        max_periods: Periods marched before giving up

    Returns:
        Mean-zero corrector with face gradients and fluxes

    Raises:
        ConvergenceError: Gap above tol after max_periods (carries the last gap)
        FieldBoundError: Face coefficient outside the ellipticity range
    """
    start = time.perf_counter()
    cell = _TorusCell(problem)
    xi = problem.xi
    shape = (problem.n,) * problem.spatial_dim
    const = problem.field.constant_diffusion
    times = np.zeros(1) if problem.steady else problem.dt * np.arange(1, problem.n_steps + 1)
    logger.debug(
        f"Corrector solve: {problem.field.kind} field, direction {xi.tolist()}, "
        f"L={problem.period_L}, {problem.n} nodes per axis, "
        f"{'steady' if problem.steady else f'{problem.n_steps} steps per period'}"
    )

    periods = 0
    if const is not None:
        levels = np.zeros((len(times), cell.n_nodes))
        residual = 0.0
    elif problem.steady:
        phi, residual = _steady_solve(cell, xi)
        levels = phi[np.newaxis]
    else:
        levels, residual, periods = _march(cell, xi, tol, max_periods)

    levels = levels - levels.mean()
    grad = np.empty((len(times), problem.spatial_dim, cell.n_nodes))
    flux = np.empty_like(grad)
    for m, t in enumerate(times):
        for k in range(problem.spatial_dim):
            grad[m, k] = cell.forward[k] @ levels[m]
        if const is not None:
            flux[m] = (const @ xi)[:, np.newaxis]
        else:
            flux[m] = cell.flux(cell.face_coefficients(float(t)), levels[m], xi)

    solution = CorrectorSolution(
        problem=problem,
        phi=levels.reshape(len(times), *shape),
        grad_phi=grad.reshape(len(times), problem.spatial_dim, *shape),
        flux=flux.reshape(len(times), problem.spatial_dim, *shape),
        times=times,
        residual=float(residual),
        mean=float(levels.mean()),
        periods=periods,
        runtime=time.perf_counter() - start,
    )
    logger.debug(
        f"Corrector converged: residual {solution.residual:.2e}, "
        f"{periods} periods, {solution.runtime:.2f}s"
    )
    return solution


def solve_correctors(
    field_: CoefficientField,
    cell_nx: int = DEFAULT_CELL_NX,
    cell_nt: int | None = None,
    tol: float = DEFAULT_TOL,
    max_periods: int = DEFAULT_MAX_PERIODS,
    max_workers: int = 1,
) -> list[CorrectorSolution]:
    """Correctors of all basis directions, solved concurrently."""
    problems = [
        CellProblem(field_, i, cell_nx=cell_nx, cell_nt=cell_nt)
        for i in range(field_.spatial_dim)
    ]
    tasks = [
        Task(f"corrector e{i + 1}", partial(solve_cell_problem, p, tol, max_periods))
        for i, p in enumerate(problems)
    ]
    solutions = []
    for outcome in run_tasks(tasks, max_workers):
        if outcome.error is not None:
            raise outcome.error
        solutions.append(outcome.result)
    return solutions


@dataclass
class HomogenizedCoefficients:
    """
    Effective coefficients.

    Attributes:
        a_bar: d x d matrix, column i is the mean flux of direction e_i
        b_bar: Effective drift
        d_bar: Effective zeroth-order coefficient
        lam: Ellipticity constant of the source field
        Lam: Lower-order bound of the source field
        stderr: Monte-Carlo standard errors per entry (zero for periodic fields)
        n_samples: Realizations averaged
        antisymmetric_norm: Spectral norm of the antisymmetric part of a_bar
        method: "periodic" or "rve"
        samples: Per-realization values
    """

    a_bar: np.ndarray
    b_bar: np.ndarray
    d_bar: float
    lam: float
    Lam: float
    stderr: dict[str, Any] = dataclass_field(default_factory=dict)
    n_samples: int = 1
    antisymmetric_norm: float = 0.0
    method: str = "periodic"
    samples: list[dict[str, Any]] = dataclass_field(default_factory=list)

    @property
    def spatial_dim(self) -> int:
        return self.a_bar.shape[0]

    def as_field(self) -> ConstantField:
        """Constant field (sym a_bar, b_bar, d_bar) for the homogenized solve."""
        sym = 0.5 * (self.a_bar + self.a_bar.T)
        _check_effective(sym, self.d_bar, self.lam)
        return ConstantField(sym, self.b_bar.copy(), min(self.d_bar, 0.0), self.lam, self.Lam)

    def to_dict(self) -> dict[str, Any]:
        return {
            "a_bar": self.a_bar.tolist(),
            "b_bar": self.b_bar.tolist(),
            "d_bar": float(self.d_bar),
            "stderr": {k: np.asarray(v).tolist() for k, v in sorted(self.stderr.items())},
            "lam": self.lam,
            "Lam": self.Lam,
            "n_samples": self.n_samples,
            "antisymmetric_norm": self.antisymmetric_norm,
            "method": self.method,
            "samples": self.samples,
        }


def _check_effective(a_bar: np.ndarray, d_bar: float, lam: float) -> None:
    sym = 0.5 * (a_bar + a_bar.T)
    eig = np.linalg.eigvalsh(sym)
    if eig[0] < 1.0 - ELLIPTICITY_SLACK or eig[-1] > lam + ELLIPTICITY_SLACK:
        raise FieldBoundError(
            f"Homogenized matrix spectrum [{eig[0]:.6g}, {eig[-1]:.6g}] outside "
            f"[1, {lam:g}]; the cell is probably under-resolved",
            ELLIPTICITY,
            stage="homogenize",
            eigenvalues=eig.tolist(),
        )
    if d_bar > BOUND_TOL:
        raise FieldBoundError(
            f"Homogenized d_bar = {d_bar:g} is positive", D_SIGN, stage="homogenize"
        )


def _level_chunks(n_levels: int, n_nodes: int):
    size = max(1, _SAMPLE_CHUNK // max(n_nodes, 1))
    for start in range(0, n_levels, size):
        yield slice(start, min(start + size, n_levels))


def _lower_order_averages(
    field_: CoefficientField, solution: CorrectorSolution
) -> tuple[float, float]:
    """<b . (xi + grad phi)> and <d> over nodes and stored levels."""
    problem = solution.problem
    axis = np.arange(problem.n) * problem.h
    grids = np.meshgrid(*([axis] * problem.spatial_dim), indexing="ij")
    nodes = np.stack(grids, axis=-1).reshape(-1, problem.spatial_dim)
    n_nodes = nodes.shape[0]
    grad = solution.nodal_gradient().reshape(len(solution.times), n_nodes, -1)

    b_sum = 0.0
    d_sum = 0.0
    for chunk in _level_chunks(len(solution.times), n_nodes):
        t = solution.times[chunk]
        y = np.broadcast_to(nodes, (len(t), n_nodes, problem.spatial_dim))
        s = np.broadcast_to(t[:, np.newaxis], (len(t), n_nodes))
        _, b, d = field_.sample(y, s)
        b_sum += float(np.sum(np.einsum("lnj,lnj->ln", b, problem.xi + grad[chunk])))
        d_sum += float(np.sum(d))
    count = len(solution.times) * n_nodes
    return b_sum / count, d_sum / count


def homogenized_coefficients(
    field_: CoefficientField, solutions: Sequence[CorrectorSolution]
) -> HomogenizedCoefficients:
    """
    Effective coefficients from the correctors of the d basis directions.

    a_bar e_i = <a (e_i + grad phi_i)>, b_bar_i = <b . (e_i + grad phi_i)> and
    d_bar = <d>, averaged over the torus and one time period.

    Raises:
        ConfigError: Missing or non-basis directions
        FieldBoundError: sym(a_bar) outside [1 - 0.02, lam + 0.02] or d_bar > 0
    """
    dim = field_.spatial_dim
    if len(solutions) != dim:
        raise ConfigError(
            f"Need {dim} correctors, got {len(solutions)}", stage="homogenize"
        )
    a_bar = np.zeros((dim, dim))
    b_bar = np.zeros(dim)
    d_bar = 0.0
    for i, sol in enumerate(solutions):
        if not np.array_equal(sol.xi, np.eye(dim)[i]):
            raise ConfigError(
                f"Corrector {i} solves direction {sol.xi.tolist()}, expected e{i + 1}",
                stage="homogenize",
            )
        a_bar[:, i] = sol.flux.mean(axis=(0, *sol._spatial_axes(2)))
        b_bar[i], d_bar = _lower_order_averages(field_, sol)

    _check_effective(a_bar, d_bar, field_.lam)
    antisym = float(np.linalg.norm(0.5 * (a_bar - a_bar.T), 2))
    coeffs = HomogenizedCoefficients(
        a_bar=a_bar,
        b_bar=b_bar,
        d_bar=d_bar,
        lam=field_.lam,
        Lam=field_.Lam,
        stderr={"a_bar": np.zeros((dim, dim)), "b_bar": np.zeros(dim), "d_bar": 0.0},
        antisymmetric_norm=antisym,
    )
    logger.info(
        f"Homogenized coefficients: a_bar={np.round(a_bar, 6).tolist()}, "
        f"b_bar={np.round(b_bar, 6).tolist()}, d_bar={d_bar:.6g}"
    )
    return coeffs


def cell_coefficients(
    field_: CoefficientField,
    cell_nx: int = DEFAULT_CELL_NX,
    cell_nt: int | None = None,
    tol: float = DEFAULT_TOL,
    max_periods: int = DEFAULT_MAX_PERIODS,
    max_workers: int = 1,
) -> HomogenizedCoefficients:
    """Correctors plus coefficients for a periodic field."""
    solutions = solve_correctors(field_, cell_nx, cell_nt, tol, max_periods, max_workers)
    return homogenized_coefficients(field_, solutions)


def sample_seeds(base_seed: int, n_samples: int) -> list[int]:
    """Per-realization seeds derived from the base seed by the cell hash."""
    mask = (1 << 63) - 1
    return [
        int(cell_hash([np.int64(i)], base_seed, stream=_SEED_STREAM)) & mask
        for i in range(n_samples)
    ]


def _realization(template: Mapping[str, Any] | CheckerboardField, seed: int, L: int):
    if isinstance(template, CheckerboardField):
        field_ = template.reseeded(seed)
    else:
        field_ = CoefficientFieldFactory.from_spec(template, seed=seed)
        if not isinstance(field_, CheckerboardField):
            raise ConfigError(
                f"RVE estimates need a checkerboard field, got '{field_.kind}'",
                stage="rve",
            )
    return field_.periodize(L)


def _rve_sample(
    template: Mapping[str, Any] | CheckerboardField,
    L: int,
    seed: int,
    cell_nx: int,
    cell_nt: int | None,
    tol: float,
    max_periods: int,
) -> HomogenizedCoefficients:
    field_ = _realization(template, seed, L)
    solutions = [
        solve_cell_problem(
            CellProblem(field_, i, cell_nx=cell_nx, cell_nt=cell_nt), tol, max_periods
        )
        for i in range(field_.spatial_dim)
    ]
    return homogenized_coefficients(field_, solutions)


def _mean_and_stderr(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = values.shape[0]
    mean = values.mean(axis=0)
    stderr = values.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    same = np.ptp(values, axis=0) == 0.0
    return np.where(same, values[0], mean), np.where(same, 0.0, stderr)


def rve_estimate(
    field_spec: Mapping[str, Any] | CheckerboardField,
    L: int,
    n_samples: int,
    base_seed: int,
    cell_nx: int = 8,
    cell_nt: int | None = None,
    tol: float = DEFAULT_TOL,
    max_periods: int = DEFAULT_MAX_PERIODS,
    max_workers: int = 1,
) -> HomogenizedCoefficients:
    """
    Representative-volume estimate of the homogenized coefficients.

    Each realization is periodized to an L-torus (L^2 in time), its d
    correctors are solved and the per-sample coefficients are averaged.

    Args:
        field_spec: Checkerboard configuration mapping or template field
        L: Torus size
        n_samples: Realizations
        base_seed: Seed from which per-sample seeds are hashed
        cell_nx: Nodes per unit cell
        cell_nt: Time steps per unit time (None: parabolic resolution)
        tol: Fixed-point tolerance of time-periodic correctors
        max_periods: Period cap of time-periodic correctors
        max_workers: Concurrent sample solves

    Returns:
        Mean coefficients with standard errors std/sqrt(n)

    Raises:
        ConfigError: L or n_samples invalid
        HomogenizationError: A sample failed; ``context["sample_index"]`` names it
    """
    if int(L) != L or L < 1:
        raise ConfigError(f"RVE size L must be an integer >= 1, got {L}", stage="rve")
    if n_samples < 1:
        raise ConfigError(f"n_samples must be >= 1, got {n_samples}", stage="rve")
    L = int(L)
    seeds = sample_seeds(base_seed, n_samples)
    logger.info(f"=== RVE ESTIMATE: L={L}, {n_samples} samples, base seed {base_seed} ===")
    start = time.perf_counter()

    tasks = [
        Task(
            f"rve sample {i}",
            partial(_rve_sample, field_spec, L, seed, cell_nx, cell_nt, tol, max_periods),
        )
        for i, seed in enumerate(seeds)
    ]
    results: list[HomogenizedCoefficients] = []
    for i, outcome in enumerate(run_tasks(tasks, max_workers)):
        error = outcome.error
        if error is None:
            results.append(outcome.result)
            continue
        if isinstance(error, HomogenizationError):
            error.context["sample_index"] = i
            error.message = f"RVE sample {i}: {error.message}"
            error.args = (error.message,)
            raise error
        raise SolverError(
            f"RVE sample {i} failed: {error}", stage="rve", sample_index=i
        ) from error

    a_mean, a_err = _mean_and_stderr(np.stack([r.a_bar for r in results]))
    b_mean, b_err = _mean_and_stderr(np.stack([r.b_bar for r in results]))
    d_mean, d_err = _mean_and_stderr(np.array([r.d_bar for r in results]))
    _check_effective(a_mean, float(d_mean), results[0].lam)

    coeffs = HomogenizedCoefficients(
        a_bar=a_mean,
        b_bar=b_mean,
        d_bar=float(d_mean),
        lam=results[0].lam,
        Lam=results[0].Lam,
        stderr={"a_bar": a_err, "b_bar": b_err, "d_bar": float(d_err)},
        n_samples=n_samples,
        antisymmetric_norm=float(np.linalg.norm(0.5 * (a_mean - a_mean.T), 2)),
        method="rve",
        samples=[
            {
                "index": i,
                "seed": seed,
                "a_bar": r.a_bar.tolist(),
                "b_bar": r.b_bar.tolist(),
                "d_bar": r.d_bar,
            }
            for i, (seed, r) in enumerate(zip(seeds, results, strict=True))
        ],
    )
    logger.info(
        f"RVE estimate completed in {time.perf_counter() - start:.1f}s: "
        f"a_bar={np.round(a_mean, 6).tolist()} +- {np.round(a_err, 6).tolist()}"
    )
    return coeffs


@dataclass
class CorrectorDiagnostics:
    mean_abs: float
    gradient_mean_abs: float
    sublinearity: dict[float, float]
    sublinearity_slope: float | None
    divergence_residual: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_abs": self.mean_abs,
            "gradient_mean_abs": self.gradient_mean_abs,
            "sublinearity": {repr(float(r)): g for r, g in self.sublinearity.items()},
            "sublinearity_slope": self.sublinearity_slope,
            "divergence_residual": self.divergence_residual,
        }


def _sublinearity(solution: CorrectorSolution, r: float) -> float:
    """mean of |phi|^2 over a midpoint lattice of B_r x (0, r^2], divided by r^2."""
    dim = solution.spatial_dim
    m_x = min(_LATTICE_MAX, max(2, math.ceil(2 * r / solution.problem.h)))
    xs = -r + (np.arange(m_x) + 0.5) * (2 * r / m_x)
    grids = np.meshgrid(*([xs] * dim), indexing="ij")
    pts = np.stack(grids, axis=-1).reshape(-1, dim)
    pts = pts[np.linalg.norm(pts, axis=1) < r]
    if solution.time_invariant:
        return float(np.mean(solution.evaluate(pts) ** 2)) / r**2

    m_t = min(_LATTICE_MAX, max(2, math.ceil(r**2 / solution.problem.dt)))
    m_t = max(1, min(m_t, _LATTICE_BUDGET // max(len(pts), 1)))
    total = 0.0
    for t in (np.arange(m_t) + 0.5) * (r**2 / m_t):
        total += float(np.mean(solution.evaluate(pts, t) ** 2))
    return total / m_t / r**2


def corrector_diagnostics(
    solution: CorrectorSolution, tile_radii: Sequence[float] = SUBLINEARITY_RADII
) -> CorrectorDiagnostics:
    """
    Report the mean, the cell-average gradient and the sublinearity functional.

    The sublinearity functional tiles phi periodically over the cylinder
    B_r x (0, r^2]; the slope is the log-log fit of g(r) against r (None when
    some g(r) vanishes).
    """
    axes = (0, *solution._spatial_axes(2))
    gradient_mean = float(np.max(np.abs(solution.grad_phi.mean(axis=axes))))
    sub = {float(r): _sublinearity(solution, float(r)) for r in tile_radii}
    slope = None
    if len(sub) >= 2 and all(g > 0.0 for g in sub.values()):
        radii = np.array(list(sub))
        slope = float(np.polyfit(np.log(radii), np.log(list(sub.values())), 1)[0])
    report = CorrectorDiagnostics(
        mean_abs=abs(float(solution.phi.mean())),
        gradient_mean_abs=gradient_mean,
        sublinearity=sub,
        sublinearity_slope=slope,
        divergence_residual=solution.divergence_residual(),
    )
    logger.debug(f"Corrector diagnostics: {report.to_dict()}")
    return report
