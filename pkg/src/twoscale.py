"""Two-scale test functions, the error functional and the bound of the main estimate.

The two-scale function built from the homogenized solution p0 and the
correctors phi_i is

    w_eps = p0 + eta_r * eps * sum_i (d_i p0) phi_i(x / eps, t / eps^2)

where the cutoff eta_r vanishes within distance r of the lateral boundary
and within r^2 of the initial time. The error functional E(eps) collects the
smallness of eps phi and the dual norms of the oscillating fluxes on the
unit cell (-1/2, 1/2)^(d+1).
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field as dataclass_field
from typing import Any

import numpy as np

from src.corrector import CorrectorSolution, HomogenizedCoefficients, homogenized_coefficients
from src.errors import ConfigError, ResolutionError
from src.fields import CoefficientField, rescale
from src.mesh import DiscreteField, SpaceTimeGrid, build_grid
from src.norms import DEFAULT_MAX_UNKNOWNS, NormWorkspace, geometric_ratio, lp_norm

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 0.1
DEFAULT_CELLS_PER_PERIOD = 8
MIN_CELLS_PER_PERIOD = 4
DEFAULT_R_LIST = (0.25, 0.125, 0.0625)
TERM_NAMES = ("corrector_l2", "corrector_gradient", "flux_a", "flux_b", "reaction_d")
PASS = "PASS"
FAIL = "FAIL"


def ramp(s: np.ndarray) -> np.ndarray:
    """C^2 ramp: 0 for s <= 1, 1 for s >= 2, quintic smoothstep between."""
    u = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def beta_exponent(delta: float = DEFAULT_DELTA) -> float:
    return delta / (4.0 + 2.0 * delta)


def _rss(values: Sequence[float]) -> float:
    return math.sqrt(sum(v * v for v in values))


@dataclass
class CutoffFunction:
    """
    Cutoff eta_r on a grid with its measured derivative bounds.

    Attributes:
        r: Layer width
        grid: Grid of the values
        values: eta_r at the nodes
        gradient: Spatial gradient, shape ``(d, *grid.shape)``
        time_derivative: dt eta_r
        C1: max |grad eta_r| * r
        C2: max |dt eta_r| * r^2
    """

    r: float
    grid: SpaceTimeGrid
    values: np.ndarray
    gradient: np.ndarray
    time_derivative: np.ndarray
    C1: float
    C2: float

    def as_field(self) -> DiscreteField:
        return DiscreteField(self.grid, self.values)

    def support_mask(self) -> np.ndarray:
        return self.values > 0.0


def build_cutoff(grid: SpaceTimeGrid, r: float, strict: bool = True) -> CutoffFunction:
    """
    Cutoff eta_r = ramp(dist(x, dU) / r) * ramp((t - t0) / r^2).

    eta_r is 1 where dist >= 2r and t - t0 >= 2 r^2, and 0 where dist <= r or
    t - t0 <= r^2.

    Args:
        grid: Space-time grid
        r: Layer width
        strict: Enforce r <= min(width, sqrt(duration)) / 4

    Raises:
        ConfigError: r not positive, or too large while ``strict``
    """
    if not r > 0.0:
        raise ConfigError(f"Cutoff width must be positive, got {r}", stage="twoscale")
    limit = min(grid.width, math.sqrt(grid.duration)) / 4.0
    if strict and r > limit * (1.0 + 1e-12):
        raise ConfigError(
            f"Cutoff width r={r:g} too large for the domain (limit {limit:g})",
            stage="twoscale",
        )
    space = ramp(grid.distance_to_boundary() / r)
    times = ramp((grid.times() - grid.time_interval[0]) / r**2)
    values = np.multiply.outer(times, space)
    eta = DiscreteField(grid, values)
    gradient = eta.gradient()
    dt_eta = eta.time_derivative()
    C1 = float(np.max(np.abs(gradient))) * r
    C2 = float(np.max(np.abs(dt_eta))) * r**2
    logger.debug(f"Cutoff r={r:g}: C1={C1:.4f}, C2={C2:.4f}")
    return CutoffFunction(r, grid, values, gradient, dt_eta, C1, C2)


def oscillating_corrector(
    solution: CorrectorSolution, grid: SpaceTimeGrid, epsilon: float
) -> tuple[np.ndarray, np.ndarray]:
    """phi(x / eps, t / eps^2) and (grad_y phi)(x / eps, t / eps^2) at the grid nodes."""
    t, *xs = grid.coordinates()
    y = np.stack(xs, axis=-1) / epsilon
    s = t / epsilon**2
    return solution.evaluate(y, s), np.moveaxis(solution.gradient_at(y, s), -1, 0)


def _check_correctors(grid: SpaceTimeGrid, correctors: Sequence[CorrectorSolution]) -> None:
    if len(correctors) != grid.spatial_dim:
        raise ConfigError(
            f"Need {grid.spatial_dim} correctors, got {len(correctors)}", stage="twoscale"
        )
    for i, sol in enumerate(correctors):
        if sol.spatial_dim != grid.spatial_dim or not np.array_equal(
            sol.xi, np.eye(grid.spatial_dim)[i]
        ):
            raise ConfigError(
                f"Corrector {i} does not match direction e{i + 1} in dimension "
                f"{grid.spatial_dim}",
                stage="twoscale",
            )


def build_w_epsilon(
    p0_hat: DiscreteField,
    correctors: Sequence[CorrectorSolution],
    epsilon: float,
    cutoff: CutoffFunction,
) -> DiscreteField:
    """
    Two-scale function w_eps = p0 + eta eps sum_i (d_i p0) phi_i^eps.

    Raises:
        ConfigError: Grid or corrector mismatch
    """
    if cutoff.grid != p0_hat.grid:
        raise ConfigError("Cutoff and p0 live on different grids", stage="twoscale")
    _check_correctors(p0_hat.grid, correctors)
    grad_p0 = p0_hat.gradient()
    layer = np.zeros(p0_hat.grid.shape)
    for i, sol in enumerate(correctors):
        phi, _ = oscillating_corrector(sol, p0_hat.grid, epsilon)
        layer += grad_p0[i] * phi
    return DiscreteField(p0_hat.grid, p0_hat.values + cutoff.values * epsilon * layer)


def gradient_terms(
    p0_hat: DiscreteField,
    correctors: Sequence[CorrectorSolution],
    epsilon: float,
    cutoff: CutoffFunction,
) -> dict[str, np.ndarray]:
    """
    Product-rule decomposition of grad w_eps, each term of shape ``(d, *grid.shape)``.

    Terms: ``base`` grad p0, ``hessian`` eta eps sum_i (grad d_i p0) phi_i,
    ``corrector_gradient`` eta sum_i (d_i p0) (grad phi_i)(x/eps), ``cutoff``
    (grad eta) eps sum_i (d_i p0) phi_i, and their sum ``total``.
    """
    _check_correctors(p0_hat.grid, correctors)
    grid = p0_hat.grid
    grad_p0 = p0_hat.gradient()
    shape = grad_p0.shape
    hessian = np.zeros(shape)
    corr_grad = np.zeros(shape)
    layer = np.zeros(grid.shape)
    for i, sol in enumerate(correctors):
        phi, gphi = oscillating_corrector(sol, grid, epsilon)
        d_i = DiscreteField(grid, grad_p0[i])
        hessian += d_i.gradient() * phi
        corr_grad += grad_p0[i] * gphi
        layer += grad_p0[i] * phi
    terms = {
        "base": grad_p0,
        "hessian": cutoff.values * epsilon * hessian,
        "corrector_gradient": cutoff.values * corr_grad,
        "cutoff": cutoff.gradient * epsilon * layer,
    }
    terms["total"] = sum(terms.values())
    return terms


@dataclass
class ErrorFunctional:
    """E(eps) on the unit cell; every term is already summed over directions."""

    epsilon: float
    corrector_l2: float
    corrector_gradient: float
    flux_a: float
    flux_b: float
    reaction_d: float
    cells_per_period: int = DEFAULT_CELLS_PER_PERIOD
    coarsening: dict[str, int] = dataclass_field(default_factory=dict)

    @property
    def terms(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in TERM_NAMES}

    @property
    def total(self) -> float:
        return sum(self.terms.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            **self.terms,
            "total": self.total,
            "cells_per_period": self.cells_per_period,
            "coarsening": dict(self.coarsening),
        }

    def to_row(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            **self.terms,
            "total": self.total,
            "space_stride": self.coarsening.get("space_stride", 1),
            "time_stride": self.coarsening.get("time_stride", 1),
        }


def unit_cell_grid(
    spatial_dim: int,
    epsilon: float,
    cells_per_period: int = DEFAULT_CELLS_PER_PERIOD,
    time_invariant: bool = False,
) -> SpaceTimeGrid:
    """
    Grid of (-1/2, 1/2)^(d+1) resolving the eps-period with ``cells_per_period`` cells.

    Time resolves the eps^2 period unless the integrands are time invariant.

    Raises:
        ResolutionError: Fewer than 4 cells per period
    """
    if cells_per_period < MIN_CELLS_PER_PERIOD:
        raise ResolutionError(
            f"{cells_per_period} cells per eps-period, at least "
            f"{MIN_CELLS_PER_PERIOD} required",
            stage="error_functional",
            epsilon=epsilon,
        )
    if not 0.0 < epsilon <= 1.0:
        raise ConfigError(f"Scale epsilon must lie in (0, 1], got {epsilon}")
    n_space = math.ceil(cells_per_period / epsilon - 1e-9)
    if time_invariant:
        n_time = max(2, math.ceil(cells_per_period / 2))
    else:
        n_time = math.ceil(cells_per_period / epsilon**2 - 1e-9)
    # Quadrature grid only; no time stepping happens on it.
    return build_grid(
        spatial_dim, (-0.5, 0.5), n_space + 1, (-0.5, 0.5), n_time + 1, c_par=math.inf
    )


def error_functional(
    field_: CoefficientField,
    correctors: Sequence[CorrectorSolution],
    epsilon: float,
    coefficients: HomogenizedCoefficients | None = None,
    cells_per_period: int = DEFAULT_CELLS_PER_PERIOD,
    max_unknowns: int = DEFAULT_MAX_UNKNOWNS,
) -> ErrorFunctional:
    """
    Evaluate E(eps) on the unit cell.

    Terms: eps ||phi^eps||_L2, ||(grad phi)^eps||_dual,
    ||a^eps (e + (grad phi)^eps) - a_bar e||_dual, the same for b, and
    ||d^eps - d_bar||_dual. Vector-valued integrands combine the dual norms of
    their components as a root sum of squares. Every term, the d term included,
    is summed over the basis directions.

    Args:
        field_: Periodic field the correctors were solved on
        correctors: One corrector per basis direction
        epsilon: Scale
        coefficients: Effective coefficients (computed from the correctors if None)
        cells_per_period: Grid cells per eps-period (>= 4)
        max_unknowns: Dual-norm coarsening threshold

    Raises:
        ResolutionError: cells_per_period < 4
    """
    dim = field_.spatial_dim
    invariant = field_.time_invariant and all(s.time_invariant for s in correctors)
    grid = unit_cell_grid(dim, epsilon, cells_per_period, invariant)
    _check_correctors(grid, correctors)
    coeffs = coefficients or homogenized_coefficients(field_, correctors)
    ws = NormWorkspace(grid, None, max_unknowns=max_unknowns)

    t, *xs = grid.coordinates()
    a, b, d = rescale(field_, epsilon).sample(np.stack(xs, axis=-1), t)

    corrector_l2 = 0.0
    corrector_gradient = 0.0
    flux_a = 0.0
    flux_b = 0.0
    reaction_d = 0.0
    d_dual = ws.dual_norm(d - coeffs.d_bar)
    for i, sol in enumerate(correctors):
        phi, gphi = oscillating_corrector(sol, grid, epsilon)
        corrector_l2 += epsilon * lp_norm(DiscreteField(grid, phi))
        corrector_gradient += _rss([ws.dual_norm(g) for g in gphi])
        corrected = np.moveaxis(gphi, 0, -1) + np.eye(dim)[i]
        flux = np.einsum("...kj,...j->...k", a, corrected) - coeffs.a_bar[:, i]
        flux_a += _rss([ws.dual_norm(flux[..., k]) for k in range(dim)])
        drift = np.einsum("...j,...j->...", b, corrected) - coeffs.b_bar[i]
        flux_b += ws.dual_norm(drift)
        reaction_d += d_dual

    result = ErrorFunctional(
        epsilon=epsilon,
        corrector_l2=corrector_l2,
        corrector_gradient=corrector_gradient,
        flux_a=flux_a,
        flux_b=flux_b,
        reaction_d=reaction_d,
        cells_per_period=cells_per_period,
        coarsening=ws.coarsening,
    )
    logger.info(f"Error functional at epsilon={epsilon:g}: E={result.total:.4e}")
    return result


@dataclass
class BoundReport:
    """Implied constants of ||p_eps - p0|| + ||grad(p_eps - p0)||_dual <= C ||f|| (r^beta + r^(-4-d/2) E)."""

    epsilon: float | None
    beta: float
    lhs: float
    E_value: float
    f_norm: float
    constants: dict[float, float]
    e_underestimated: bool = False

    @property
    def min_constant(self) -> float:
        return min(self.constants.values())

    @property
    def best_r(self) -> float:
        return min(self.constants, key=lambda r: self.constants[r])

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "beta": self.beta,
            "lhs": self.lhs,
            "E_value": self.E_value,
            "f_norm": self.f_norm,
            "constants": {repr(float(r)): c for r, c in self.constants.items()},
            "min_constant": self.min_constant,
            "best_r": self.best_r,
            "e_underestimated": self.e_underestimated,
        }


def error_lhs(
    p_eps_hat: DiscreteField,
    p0_hat: DiscreteField,
    workspace: NormWorkspace | None = None,
) -> float:
    """||p_eps - p0||_L2 + ||grad(p_eps - p0)||_dual over the whole grid."""
    diff = p_eps_hat - p0_hat
    ws = workspace or NormWorkspace(diff.grid)
    return lp_norm(diff) + _rss([ws.dual_norm(g) for g in diff.gradient()])


def bound_check(
    p_eps_hat: DiscreteField,
    p0_hat: DiscreteField,
    E_value: float,
    f_norm: float,
    r_list: Sequence[float] = DEFAULT_R_LIST,
    beta: float | None = None,
    epsilon: float | None = None,
    workspace: NormWorkspace | None = None,
    lhs: float | None = None,
) -> BoundReport:
    """
    Implied constants C(r) = LHS / (||f|| (r^beta + r^(-4-d/2) E)) for each r.

    Args:
        p_eps_hat: Transformed heterogeneous solution
        p0_hat: Transformed homogenized solution on the same grid
        E_value: Error functional value
        f_norm: Norm of the boundary data (must be positive)
        r_list: Cutoff widths
        beta: Exponent, delta / (4 + 2 delta) with delta = 0.1 by default
        epsilon: Recorded with the report
        workspace: Dual-norm workspace of the full grid
        lhs: Precomputed left side

    Raises:
        ConfigError: Grid mismatch, f_norm <= 0 or empty r_list
    """
    if p_eps_hat.grid != p0_hat.grid:
        raise ConfigError("Trajectories live on different grids", stage="bound")
    if not f_norm > 0.0:
        raise ConfigError(f"f_norm must be positive, got {f_norm}", stage="bound")
    if not r_list:
        raise ConfigError("Empty r list", stage="bound")
    beta = beta_exponent() if beta is None else beta
    dim = p0_hat.grid.spatial_dim
    value = error_lhs(p_eps_hat, p0_hat, workspace) if lhs is None else lhs
    constants = {
        float(r): value / (f_norm * (r**beta + r ** (-4.0 - dim / 2.0) * E_value))
        for r in r_list
    }
    report = BoundReport(
        epsilon=epsilon,
        beta=beta,
        lhs=value,
        E_value=E_value,
        f_norm=f_norm,
        constants=constants,
        e_underestimated=E_value == 0.0 and value > 1e-12,
    )
    if report.e_underestimated:
        logger.warning(
            f"Bound check: E=0 with nonzero left side {value:.3e}; E is underestimated"
        )
    return report


def bound_sweep_verdict(reports: Sequence[BoundReport], band: float = 3.0) -> str:
    """
    PASS when the min-over-r constants stay bounded across an eps sweep.

    Bounded means finite, and either within a factor ``band`` of each other or
    not growing (fitted geometric ratio <= 1).
    """
    mins = [r.min_constant for r in reports]
    if not mins or not all(math.isfinite(c) for c in mins):
        return FAIL
    top = max(mins)
    if top <= 1e-12:
        return PASS
    positive = [c for c in mins if c > 0.0]
    if len(positive) == len(mins) and top <= band * min(positive):
        return PASS
    if len(positive) == len(mins) and len(mins) >= 2 and geometric_ratio(mins) <= 1.0:
        return PASS
    return FAIL


@dataclass
class PointwiseScalingReport:
    """Interior sup of derivatives of p0 against the cutoff width."""

    radii: list[float]
    sups: dict[str, list[float]]
    slopes: dict[str, float]
    predicted: dict[str, float]
    constants: dict[str, list[float]]

    @property
    def consistent(self) -> bool:
        return all(self.slopes[k] >= self.predicted[k] - 0.5 for k in self.slopes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "radii": self.radii,
            "sups": self.sups,
            "slopes": self.slopes,
            "predicted": self.predicted,
            "constants": self.constants,
            "consistent": self.consistent,
        }


def pointwise_scaling_check(
    p0_hat: DiscreteField,
    radii: Sequence[float],
    orders: Sequence[tuple[int, int]] = ((1, 0), (0, 1)),
) -> PointwiseScalingReport:
    """
    Fit sup over {dist >= r, t - t0 >= r^2} of |grad^k dt^l p0| against r.

    The interior estimate allows growth like r^(-(k + 2l) - (2 + d)/2) as r
    shrinks; a fitted slope not below that exponent (minus 0.5) is consistent.
    Constants are sup * r^((k + 2l) + (2 + d)/2) / ||p0||_L2.

    Raises:
        ConfigError: Fewer than two radii, or unsupported order
    """
    if len(radii) < 2:
        raise ConfigError("Need at least two radii", stage="pointwise")
    grid = p0_hat.grid
    dim = grid.spatial_dim
    norm = max(lp_norm(p0_hat), 1e-300)
    dist = grid.distance_to_boundary()
    rel_t = grid.times() - grid.time_interval[0]

    derivatives: dict[str, np.ndarray] = {}
    for k, l in orders:
        if (k, l) == (1, 0):
            derivatives["grad"] = np.sqrt(np.sum(p0_hat.gradient() ** 2, axis=0))
        elif (k, l) == (0, 1):
            derivatives["dt"] = np.abs(p0_hat.time_derivative())
        else:
            raise ConfigError(f"Unsupported derivative order {(k, l)}", stage="pointwise")
    exponents = {"grad": 1.0 + (2 + dim) / 2.0, "dt": 2.0 + (2 + dim) / 2.0}

    sups: dict[str, list[float]] = {name: [] for name in derivatives}
    for r in radii:
        mask = np.multiply.outer(rel_t >= r**2, dist >= r)
        for name, values in derivatives.items():
            sups[name].append(float(values[mask].max()) if mask.any() else 0.0)

    logs_r = np.log(np.asarray(radii, dtype=float))
    slopes = {}
    for name, vals in sups.items():
        safe = np.log(np.maximum(np.asarray(vals), 1e-300))
        slopes[name] = float(np.polyfit(logs_r, safe, 1)[0])
    return PointwiseScalingReport(
        radii=[float(r) for r in radii],
        sups=sups,
        slopes=slopes,
        predicted={name: -exponents[name] for name in derivatives},
        constants={
            name: [
                s * r ** exponents[name] / norm for s, r in zip(vals, radii, strict=True)
            ]
            for name, vals in sups.items()
        },
    )
