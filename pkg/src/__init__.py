"""ParaHom - numerical toolkit for parabolic homogenization with lower-order terms.

The package solves

    dt p - div(a(x/eps, t/eps^2) grad p) - b . grad p - d p = h

on space-time cylinders, computes correctors and homogenized coefficients,
and measures how fast the heterogeneous solutions approach the homogenized
one.

Main modules:
    mesh: Space-time grids, nodal fields, cylinder regions
    fields: Coefficient fields (constant, periodic, random checkerboard, laminate)
    linalg: Banded, sparse, dense and Krylov solves with residual checks
    parabolic_solver: Implicit Euler Cauchy-Dirichlet solver
    norms: L^p, parabolic H^1 and dual norms
    corrector: Cell problems, homogenized coefficients, RVE estimates
    twoscale: Cutoff, two-scale expansion, error functional, bound checks
    diagnostics: Caccioppoli and Meyers probes
    harness: Convergence studies and Monte-Carlo ensembles
    results: Result store and CSV/JSON emission
    config: TOML run configuration
    cli: Command-line interface

Example:
    >>> from src.fields import make_periodic
    >>> from src.corrector import cell_coefficients
    >>> coeffs = cell_coefficients(make_periodic(spatial_dim=1))
    >>> coeffs.a_bar
"""

__version__ = "1.0.0"
__author__ = "ParaHom Contributors"
__description__ = "Numerical parabolic homogenization with lower-order terms"
__license__ = "MIT"

from src.corrector import HomogenizedCoefficients, cell_coefficients, rve_estimate
from src.fields import CoefficientFieldFactory, rescale
from src.harness import StudySpec, monte_carlo_ensemble, run_convergence_study
from src.mesh import DiscreteField, SpaceTimeGrid, build_grid
from src.parabolic_solver import CauchyDirichletProblem, solve_problem

__all__ = [
    "CauchyDirichletProblem",
    "CoefficientFieldFactory",
    "DiscreteField",
    "HomogenizedCoefficients",
    "SpaceTimeGrid",
    "StudySpec",
    "build_grid",
    "cell_coefficients",
    "monte_carlo_ensemble",
    "rescale",
    "rve_estimate",
    "run_convergence_study",
    "solve_problem",
]
