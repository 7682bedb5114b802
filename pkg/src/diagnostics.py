"""Numerical probes of the interior and global Caccioppoli inequalities and of
the Meyers higher-integrability estimate.

Every probe first recomputes the discrete PDE residual of the trajectory it
is given and refuses it when the residual exceeds ``RESIDUAL_GATE`` times
the solver tolerance. Probes only report: the implied constant is
lhs / sum(rhs_components) and no inequality is asserted.

Cylinders follow ``Q_r = B_r(center) x (t_anchor, t_anchor + r^2]``; ``Q_2r``
shares center and bottom anchor.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field as dataclass_field
from typing import Any

import numpy as np

from src.errors import ConfigError, SolverError
from src.mesh import CylinderRegion, DiscreteField
from src.norms import (
    NormWorkspace,
    lp_norm,
    spatial_dual_norm_l2t,
    sup_time_l2,
    w1par_norm,
)
from src.parabolic_solver import CauchyDirichletProblem, pde_residual

logger = logging.getLogger(__name__)

RESIDUAL_GATE = 10.0
MEYERS_BAND = 10.0
DEFAULT_DELTAS = (0.05, 0.1, 0.2, 0.5)
DUAL_SURROGATE_FLAG = "dual_norm_2_based_surrogate"


@dataclass
class InequalityReport:
    """One side-by-side evaluation of an energy inequality.

    Attributes:
        probe: Probe name
        lhs: Left-hand side
        rhs_components: Named right-hand side terms
        context: Radius, center, field description, seed
        flags: Caveats attached to the numbers
        companion: Second inequality of the same probe, if any
    """

    probe: str
    lhs: float
    rhs_components: dict[str, float]
    context: dict[str, Any] = dataclass_field(default_factory=dict)
    flags: list[str] = dataclass_field(default_factory=list)
    companion: "InequalityReport | None" = None

    @property
    def rhs(self) -> float:
        return float(sum(self.rhs_components.values()))

    @property
    def implied_constant(self) -> float:
        rhs = self.rhs
        if rhs > 0:
            return self.lhs / rhs
        return 0.0 if self.lhs == 0 else math.inf

    def to_dict(self) -> dict[str, Any]:
        return {
            "probe": self.probe,
            "lhs": self.lhs,
            "rhs_components": dict(self.rhs_components),
            "implied_constant": self.implied_constant,
            "context": dict(self.context),
            "flags": list(self.flags),
            "companion": None if self.companion is None else self.companion.to_dict(),
        }


def check_input_residual(
    problem: CauchyDirichletProblem, solution: DiscreteField, factor: float = RESIDUAL_GATE
) -> float:
    """
    Residual gate of every probe.

    Returns:
        The recomputed residual

    Raises:
        SolverError: Residual above ``factor * problem.settings.tol``
    """
    residual = pde_residual(problem, solution)
    limit = factor * problem.settings.tol
    if not residual <= limit:
        raise SolverError(
            f"Probe input does not solve its problem: residual {residual:.3e} > {limit:.3e}",
            stage="diagnostics",
            residual=residual,
        )
    return residual


def _gradient_magnitude(p: DiscreteField) -> DiscreteField:
    return DiscreteField(p.grid, np.sqrt(np.sum(p.gradient() ** 2, axis=0)))


def _source(problem: CauchyDirichletProblem) -> DiscreteField:
    return problem.source if problem.source is not None else DiscreteField.zeros(problem.grid)


def _context(problem: CauchyDirichletProblem, **extra: Any) -> dict[str, Any]:
    context = {"field": problem.field.describe(), "lambda_shift": problem.lambda_shift}
    context.update(extra)
    return context


def caccioppoli_interior(
    problem: CauchyDirichletProblem,
    p: DiscreteField,
    r: float,
    center: Sequence[float],
    t_anchor: float | None = None,
) -> InequalityReport:
    """
    Interior Caccioppoli inequality on Q_r against Q_2r.

    lhs = ||grad p||_{L2(Q_r)}, rhs = r^-1 ||p||_{L2(Q_2r)} + ||h||_{L2(H^-1(B_2r); I_2r)}.
    The companion compares sup_{I_r} ||p||_{L2(B_r)} with
    ||grad p||_{L2(Q_2r)} plus the same dual term.

    Args:
        problem: Problem solved by ``p`` (its source is h)
        p: Trajectory
        r: Inner radius
        center: Ball center
        t_anchor: Bottom of both cylinders, the initial time by default

    Raises:
        ConfigError: Q_2r not contained in the grid domain
        SolverError: Residual gate
    """
    grid = problem.grid
    anchor = grid.time_interval[0] if t_anchor is None else float(t_anchor)
    inner = CylinderRegion(tuple(float(c) for c in center), float(r), t_anchor=anchor)
    outer = inner.scaled(2.0)
    if not outer.fits_in(grid):
        raise ConfigError(
            f"Q_2r with r={r} at {tuple(center)} exceeds the domain",
            stage="diagnostics",
        )
    residual = check_input_residual(problem, p)

    grad_abs = _gradient_magnitude(p)
    outer_ws = NormWorkspace(grid, outer)
    inner_ws = NormWorkspace(grid, inner)
    dual_h = spatial_dual_norm_l2t(_source(problem), workspace=outer_ws)

    context = _context(problem, r=r, center=list(center), t_anchor=anchor, residual=residual)
    companion = InequalityReport(
        probe="caccioppoli_sup_time",
        lhs=sup_time_l2(p, workspace=inner_ws),
        rhs_components={
            "grad_l2_outer": lp_norm(grad_abs, outer_ws.mask, 2.0),
            "source_dual": dual_h,
        },
        context=dict(context),
    )
    report = InequalityReport(
        probe="caccioppoli_interior",
        lhs=lp_norm(grad_abs, inner_ws.mask, 2.0),
        rhs_components={
            "l2_outer_over_r": lp_norm(p, outer_ws.mask, 2.0) / r,
            "source_dual": dual_h,
        },
        context=context,
        companion=companion,
    )
    logger.info(
        f"Caccioppoli interior r={r}: lhs={report.lhs:.4g}, "
        f"C={report.implied_constant:.4g}"
    )
    return report


def caccioppoli_global(
    problem: CauchyDirichletProblem,
    v: DiscreteField,
    r: float,
    center: Sequence[float],
    t_anchor: float | None = None,
) -> InequalityReport:
    """
    Caccioppoli inequality up to the parabolic boundary, regions intersected with V.

    ``problem`` must carry zero boundary data. The companion is the global
    energy ratio ||grad v||_{L2(V)} / ||H||_{L2(H^-1)}.

    Raises:
        ConfigError: Nonzero boundary data
        SolverError: Residual gate
    """
    grid = problem.grid
    f = problem.boundary_data.values
    bmask = grid.boundary_mask()
    if np.any(f[0] != 0.0) or np.any(f[:, bmask] != 0.0):
        raise ConfigError(
            "Global Caccioppoli probe needs zero parabolic boundary data",
            stage="diagnostics",
        )
    anchor = grid.time_interval[0] if t_anchor is None else float(t_anchor)
    inner = CylinderRegion(tuple(float(c) for c in center), float(r), t_anchor=anchor)
    outer = inner.scaled(2.0)
    residual = check_input_residual(problem, v)

    grad_abs = _gradient_magnitude(v)
    outer_ws = NormWorkspace(grid, outer)
    inner_mask = NormWorkspace(grid, inner).mask
    H = _source(problem)
    context = _context(problem, r=r, center=list(center), t_anchor=anchor, residual=residual)
    report = InequalityReport(
        probe="caccioppoli_global",
        lhs=lp_norm(grad_abs, inner_mask, 2.0),
        rhs_components={
            "l2_outer_over_r": lp_norm(v, outer_ws.mask, 2.0) / r,
            "source_dual": spatial_dual_norm_l2t(H, workspace=outer_ws),
        },
        context=context,
        companion=global_energy_ratio(problem, v, check=False),
    )
    logger.info(
        f"Caccioppoli global r={r}: lhs={report.lhs:.4g}, "
        f"C={report.implied_constant:.4g}"
    )
    return report


def global_energy_ratio(
    problem: CauchyDirichletProblem, v: DiscreteField, check: bool = True
) -> InequalityReport:
    """||grad v||_{L2(V)} against the slice-wise dual norm of the source on V."""
    residual = check_input_residual(problem, v) if check else None
    return InequalityReport(
        probe="global_energy",
        lhs=lp_norm(_gradient_magnitude(v), None, 2.0),
        rhs_components={"source_dual": spatial_dual_norm_l2t(_source(problem))},
        context=_context(problem, residual=residual),
    )


@dataclass
class MeyersReport:
    """Implied Meyers constants per exponent 2 + delta over an ensemble.

    ``constants[delta][k]`` belongs to ensemble member k; delta 0 is the
    baseline.
    """

    deltas: list[float]
    constants: dict[float, list[float]]
    grad_norms: dict[float, list[float]]
    data_norms: dict[float, list[float]]
    delta_star: float | None
    band: float = MEYERS_BAND
    flags: list[str] = dataclass_field(default_factory=lambda: [DUAL_SURROGATE_FLAG])

    @property
    def baseline(self) -> float:
        return max(self.constants[0.0])

    def worst(self, delta: float) -> float:
        return max(self.constants[delta])

    def to_dict(self) -> dict[str, Any]:
        return {
            "deltas": list(self.deltas),
            "constants": {str(k): list(v) for k, v in self.constants.items()},
            "grad_norms": {str(k): list(v) for k, v in self.grad_norms.items()},
            "data_norms": {str(k): list(v) for k, v in self.data_norms.items()},
            "baseline": self.baseline,
            "delta_star": self.delta_star,
            "band": self.band,
            "flags": list(self.flags),
        }


def select_delta(
    constants: dict[float, list[float]], band: float = MEYERS_BAND
) -> float | None:
    """Largest delta whose worst constant stays within ``band`` times the delta-0 worst."""
    baseline = max(constants[0.0])
    admissible = [
        delta
        for delta, values in constants.items()
        if delta > 0 and all(math.isfinite(c) for c in values) and max(values) <= band * baseline
    ]
    return max(admissible) if admissible else None


def meyers_probe(
    members: Sequence[tuple[CauchyDirichletProblem, DiscreteField]],
    deltas: Sequence[float] = DEFAULT_DELTAS,
    band: float = MEYERS_BAND,
) -> MeyersReport:
    """
    Higher integrability of the gradient over an ensemble of solved problems.

    For q = 2 + delta, the implied constant of a member is
    ||grad p||_{Lq(V)} / (||f||_{W^{1,q}_par(V)} + ||h||_dual), where both dual
    terms use the 2-based spatial surrogate.

    Args:
        members: ``(problem, solution)`` pairs, each passing the residual gate
        deltas: Exponent increments in (0, 2]
        band: Admissibility factor against the delta-0 baseline

    Raises:
        ConfigError: Empty ensemble or delta outside (0, 2]
    """
    if not members:
        raise ConfigError("Meyers probe needs at least one solved problem", stage="diagnostics")
    bad = [d for d in deltas if not 0.0 < d <= 2.0]
    if bad:
        raise ConfigError(f"delta must lie in (0, 2], got {bad}", stage="diagnostics")

    all_deltas = [0.0] + sorted(set(float(d) for d in deltas))
    constants: dict[float, list[float]] = {d: [] for d in all_deltas}
    grad_norms: dict[float, list[float]] = {d: [] for d in all_deltas}
    data_norms: dict[float, list[float]] = {d: [] for d in all_deltas}

    for k, (problem, p) in enumerate(members):
        check_input_residual(problem, p)
        ws = NormWorkspace(problem.grid)
        grad_abs = _gradient_magnitude(p)
        h_dual = spatial_dual_norm_l2t(_source(problem), workspace=ws)
        for delta in all_deltas:
            q = 2.0 + delta
            g = lp_norm(grad_abs, None, q)
            data = w1par_norm(problem.boundary_data, q, workspace=ws) + h_dual
            grad_norms[delta].append(g)
            data_norms[delta].append(data)
            constants[delta].append(g / data if data > 0 else (0.0 if g == 0 else math.inf))
        logger.debug(f"Meyers probe member {k}: C(0)={constants[0.0][-1]:.4g}")

    report = MeyersReport(
        deltas=all_deltas[1:],
        constants=constants,
        grad_norms=grad_norms,
        data_norms=data_norms,
        delta_star=select_delta(constants, band),
        band=band,
    )
    logger.info(
        f"Meyers probe over {len(members)} member(s): delta*={report.delta_star}"
    )
    return report
