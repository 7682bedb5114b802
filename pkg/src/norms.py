"""Discrete L^p, H^1_par and dual norms over space-time regions.

Quadrature uses tensor trapezoid weights of the full grid restricted to the
region. The parabolic inner product is the surrogate

    (u, v)_G = (u, v)_L2 + (grad u, grad v)_L2
               + dt * sum_n (D_t u^n, (I - Laplacian)^-1 D_t v^n)

with Gram matrix G = W_t (x) K_x + (1/dt) B_t (x) W_x K_x^-1 W_x, where
K_x = W_x + L_x is the spatial H^1 Gram matrix and B_t the time difference
Laplacian. The dual norm of f is sqrt(F^T G^-1 F) with F = W f.

Regions must be products of a run of consecutive time levels and a fixed
set of spatial nodes. Regions too large for a dense solve are handled on a
coarse test space: multilinear interpolation P from a strided lattice, with
G_c = P^T G P and F_c = P^T F.

Classes:
    NormWorkspace: Region data, Gram assembly and factorization cache
    WeakConvergenceReport: Outcome of weak_convergence_check
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from src.errors import ConfigError, MeshError
from src.linalg import DEFAULT_DENSE_CAP, CholeskyFactor
from src.mesh import CylinderRegion, DiscreteField, SpaceTimeGrid, region_mask

logger = logging.getLogger(__name__)

DEFAULT_MAX_UNKNOWNS = 4096
WEAKLY_CONVERGENT = "WEAKLY_CONVERGENT"
NOT_CONVERGENT = "NOT_CONVERGENT"
HYPOTHESIS_VIOLATION = "HYPOTHESIS_VIOLATION"

_CHUNK = 256

Region = CylinderRegion | np.ndarray | None


def trapezoid_weights(n: int, step: float) -> np.ndarray:
    w = np.full(n, step)
    w[0] = w[-1] = 0.5 * step
    return w


def grid_weights(grid: SpaceTimeGrid) -> np.ndarray:
    """Tensor trapezoid weights of shape ``grid.shape``."""
    w = trapezoid_weights(grid.nt, grid.dt)
    w1 = trapezoid_weights(grid.nx, grid.h)
    for _ in range(grid.spatial_dim):
        w = np.multiply.outer(w, w1)
    return w


def resolve_mask(grid: SpaceTimeGrid, region: Region) -> np.ndarray:
    if region is None:
        return np.ones(grid.shape, dtype=bool)
    if isinstance(region, CylinderRegion):
        return region_mask(grid, region)
    mask = np.asarray(region, dtype=bool)
    if mask.shape != grid.shape:
        raise MeshError(f"Mask shape {mask.shape} does not match grid {grid.shape}")
    return mask


def _prolongation_1d(n: int, stride: int) -> sp.csr_matrix:
    """Linear interpolation from the lattice 0, s, 2s, ..., n-1 to 0..n-1."""
    if stride <= 1 or n <= 2:
        return sp.identity(n, format="csr")
    coarse = list(range(0, n, stride))
    if coarse[-1] != n - 1:
        coarse.append(n - 1)
    nodes = np.asarray(coarse)
    i = np.arange(n)
    k = np.clip(np.searchsorted(nodes, i, side="right") - 1, 0, len(nodes) - 2)
    left, right = nodes[k], nodes[k + 1]
    theta = (i - left) / (right - left)
    rows = np.concatenate([i, i])
    cols = np.concatenate([k, k + 1])
    vals = np.concatenate([1.0 - theta, theta])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, len(nodes)))


def _coarse_count(n: int, stride: int) -> int:
    if stride <= 1 or n <= 2:
        return n
    return math.ceil((n - 1) / stride) + 1


class NormWorkspace:
    """
    Norm evaluation on one region of one grid.

    Args:
        grid: Space-time grid
        region: CylinderRegion, boolean mask of ``grid.shape`` or None (full grid)
        max_unknowns: Size above which dual norms use a coarse test space
        dense_cap: Largest dense Gram system accepted

    Raises:
        MeshError: Empty region
        ConfigError: Region without product structure
    """

    def __init__(
        self,
        grid: SpaceTimeGrid,
        region: Region = None,
        max_unknowns: int = DEFAULT_MAX_UNKNOWNS,
        dense_cap: int = DEFAULT_DENSE_CAP,
    ):
        self.grid = grid
        self.mask = resolve_mask(grid, region)
        spatial_axes = tuple(range(1, grid.spatial_dim + 1))
        levels = np.flatnonzero(self.mask.any(axis=spatial_axes))
        if levels.size == 0:
            raise MeshError("Empty region", stage="norms")
        spatial = self.mask[levels[0]]
        if not np.all(self.mask[levels] == spatial):
            raise ConfigError(
                "Region is not a product of time levels and spatial nodes", stage="norms"
            )
        if np.any(np.diff(levels) != 1):
            raise ConfigError("Region time levels are not consecutive", stage="norms")

        self.levels = levels
        self.spatial_mask = spatial
        self.spatial_nodes = np.flatnonzero(spatial.ravel())
        self.max_unknowns = max_unknowns
        self.dense_cap = dense_cap

        self.w_t = trapezoid_weights(grid.nt, grid.dt)[levels]
        w_x_full = grid_weights(grid)[0] / (0.5 * grid.dt)
        self.w_x = w_x_full.ravel()[self.spatial_nodes]
        self.lap_x = self._graph_laplacian()
        self.k_x = (sp.diags(self.w_x) + self.lap_x).tocsc()

        self._k_lu: spla.SuperLU | None = None
        self._factor: CholeskyFactor | None = None
        self._p_t: sp.csr_matrix | None = None
        self._p_x: sp.csr_matrix | None = None
        self.strides = (1, 1)

    @property
    def n_unknowns(self) -> int:
        return len(self.levels) * len(self.spatial_nodes)

    @property
    def coarsening(self) -> dict[str, int]:
        """Strides of the dual-norm test space (1 means the full grid)."""
        self._ensure_factor()
        assert self._p_t is not None and self._p_x is not None
        return {
            "space_stride": self.strides[0],
            "time_stride": self.strides[1],
            "coarse_unknowns": self._p_t.shape[1] * self._p_x.shape[1],
        }

    def _graph_laplacian(self) -> sp.csr_matrix:
        grid = self.grid
        n_s = len(self.spatial_nodes)
        pos = np.full(grid.n_spatial, -1)
        pos[self.spatial_nodes] = np.arange(n_s)
        idx = np.arange(grid.n_spatial).reshape(grid.spatial_shape)
        weight = grid.h ** (grid.spatial_dim - 2)
        rows, cols = [], []
        for k in range(grid.spatial_dim):
            lo = [slice(None)] * grid.spatial_dim
            hi = [slice(None)] * grid.spatial_dim
            lo[k] = slice(0, -1)
            hi[k] = slice(1, None)
            i = pos[idx[tuple(lo)].ravel()]
            j = pos[idx[tuple(hi)].ravel()]
            keep = (i >= 0) & (j >= 0)
            rows.append(i[keep])
            cols.append(j[keep])
        i = np.concatenate(rows)
        j = np.concatenate(cols)
        ones = np.full(i.size, weight)
        adjacency = sp.coo_matrix((ones, (i, j)), shape=(n_s, n_s))
        adjacency = (adjacency + adjacency.T).tocsr()
        degree = np.asarray(adjacency.sum(axis=1)).ravel()
        return (sp.diags(degree) - adjacency).tocsr()

    def _k_solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._k_lu is None:
            self._k_lu = spla.splu(self.k_x)
        return self._k_lu.solve(rhs)

    def restrict(self, field: DiscreteField | np.ndarray) -> np.ndarray:
        """Region values as a (levels x spatial nodes) matrix."""
        values = field.values if isinstance(field, DiscreteField) else np.asarray(field)
        if values.shape != self.grid.shape:
            raise MeshError(f"Values of shape {values.shape} do not match the grid")
        flat = values.reshape(self.grid.nt, -1)
        return flat[self.levels][:, self.spatial_nodes]

    def _spatial_prolongation(self, stride: int) -> sp.csr_matrix:
        grid = self.grid
        coords = np.unravel_index(self.spatial_nodes, grid.spatial_shape)
        lo = [int(c.min()) for c in coords]
        ext = [int(c.max()) - lo[k] + 1 for k, c in enumerate(coords)]
        p = sp.identity(1, format="csr")
        for n in ext:
            p = sp.kron(p, _prolongation_1d(n, stride), format="csr")
        local = np.ravel_multi_index(tuple(c - lo[k] for k, c in enumerate(coords)), ext)
        p = p[local]
        used = np.flatnonzero(np.asarray(abs(p).sum(axis=0)).ravel() > 0)
        return p[:, used].tocsr()

    def _choose_strides(self) -> tuple[int, int]:
        coords = np.unravel_index(self.spatial_nodes, self.grid.spatial_shape)
        ext = [int(c.max() - c.min()) + 1 for c in coords]
        n_t = len(self.levels)
        sx, st = 1, 1

        def size(sx, st):
            n = _coarse_count(n_t, st)
            for e in ext:
                n *= _coarse_count(e, sx)
            return n

        if len(self.spatial_nodes) * n_t <= self.max_unknowns:
            return 1, 1
        while size(sx, st) > self.max_unknowns:
            c_t = _coarse_count(n_t, st)
            c_x = max(_coarse_count(e, sx) for e in ext)
            if c_t >= c_x and c_t > 2:
                st *= 2
            elif c_x > 2:
                sx *= 2
            elif c_t > 2:
                st *= 2
            else:
                break
        return sx, st

    def _ensure_factor(self) -> CholeskyFactor:
        if self._factor is not None:
            return self._factor
        sx, st = self._choose_strides()
        self.strides = (sx, st)
        p_t = _prolongation_1d(len(self.levels), st)
        p_x = self._spatial_prolongation(sx)
        if sx > 1 or st > 1:
            logger.info(
                f"Dual norm on coarse test space: space stride {sx}, time stride {st}, "
                f"{p_t.shape[1] * p_x.shape[1]} unknowns (fine {self.n_unknowns})"
            )
        self._factor = CholeskyFactor(self._coarse_gram(p_t, p_x), cap=self.dense_cap)
        self._p_t, self._p_x = p_t, p_x
        return self._factor

    def _coarse_gram(self, p_t: sp.csr_matrix, p_x: sp.csr_matrix) -> np.ndarray:
        n_t = len(self.levels)
        w_t = sp.diags(self.w_t)
        if n_t > 1:
            d_t = sp.diags([-np.ones(n_t - 1), np.ones(n_t - 1)], [0, 1], shape=(n_t - 1, n_t))
            b_t = (d_t.T @ d_t).tocsr()
        else:
            b_t = sp.csr_matrix((1, 1))
        a_t = (p_t.T @ w_t @ p_t).toarray()
        bc_t = (p_t.T @ b_t @ p_t).toarray()
        a_x = (p_x.T @ self.k_x @ p_x).toarray()
        wp = (sp.diags(self.w_x) @ p_x).tocsc()
        z = self._k_solve(wp.toarray())
        m_x = (wp.T @ z) / self.grid.dt
        gram = np.kron(a_t, a_x) + np.kron(bc_t, np.asarray(m_x))
        return 0.5 * (gram + gram.T)

    def gram_matrix(self) -> np.ndarray:
        """Dense Gram matrix of the (possibly coarse) test space."""
        return self._ensure_factor().matrix

    def load_vector(self, field: DiscreteField | np.ndarray) -> np.ndarray:
        """P^T W f on the test space."""
        self._ensure_factor()
        assert self._p_t is not None and self._p_x is not None
        u = self.restrict(field)
        weighted = (self.w_t[:, np.newaxis] * u) * self.w_x[np.newaxis, :]
        return np.asarray(self._p_t.T @ (self._p_x.T @ weighted.T).T).ravel()

    def dual_norm(self, field: DiscreteField | np.ndarray) -> float:
        factor = self._ensure_factor()
        load = self.load_vector(field)
        value = float(load @ factor.solve(load))
        return math.sqrt(max(value, 0.0))

    def spatial_dual_sq(self, u: np.ndarray) -> np.ndarray:
        """(W_x g)^T K_x^-1 (W_x g) for every row g of ``u``."""
        out = np.empty(u.shape[0])
        for start in range(0, u.shape[0], _CHUNK):
            block = (u[start : start + _CHUNK] * self.w_x).T
            z = self._k_solve(block)
            out[start : start + _CHUNK] = np.einsum("sn,sn->n", block, z)
        return out


def lp_norm(field: DiscreteField, region: Region = None, p: float = 2.0) -> float:
    """
    Discrete L^p norm over a region.

    Args:
        field: Nodal trajectory
        region: Region (full grid when None)
        p: Exponent in [1, inf]

    Raises:
        ConfigError: p < 1
        MeshError: Empty region
    """
    if not p >= 1.0:
        raise ConfigError(f"Exponent p must lie in [1, inf], got {p}")
    mask = resolve_mask(field.grid, region)
    if not mask.any():
        raise MeshError("Empty region", stage="norms")
    values = np.abs(field.values[mask])
    if math.isinf(p):
        return float(values.max())
    weights = grid_weights(field.grid)[mask]
    return float(np.sum(weights * values**p) ** (1.0 / p))


def pairing(f: DiscreteField, g: DiscreteField, region: Region = None) -> float:
    """Discrete integral of f g over a region."""
    mask = resolve_mask(f.grid, region)
    weights = grid_weights(f.grid)[mask]
    return float(np.sum(weights * f.values[mask] * g.values[mask]))


def h1par_norm(
    field: DiscreteField,
    region: Region = None,
    workspace: NormWorkspace | None = None,
) -> float:
    """Surrogate parabolic H^1 norm sqrt(u^T G u) on the full-resolution region."""
    ws = workspace or NormWorkspace(field.grid, region)
    u = ws.restrict(field)
    l2_sq = float(np.sum(ws.w_t[:, np.newaxis] * ws.w_x * u**2))
    grad_sq = float(np.sum(ws.w_t * np.einsum("ns,ns->n", u, (ws.lap_x @ u.T).T)))
    time_sq = 0.0
    if u.shape[0] > 1:
        diffs = np.diff(u, axis=0)
        time_sq = float(np.sum(ws.spatial_dual_sq(diffs))) / field.grid.dt
    return math.sqrt(max(l2_sq + grad_sq + time_sq, 0.0))


def dual_norm(
    field: DiscreteField,
    region: Region = None,
    workspace: NormWorkspace | None = None,
) -> float:
    """
    Riesz dual norm sqrt(F^T G^-1 F) of a field over a region.

    Pass a workspace to reuse the Gram factorization across fields.

    Raises:
        NotPositiveDefiniteError: Gram matrix not SPD
    """
    ws = workspace or NormWorkspace(field.grid, region)
    return ws.dual_norm(field)


def spatial_dual_norm_l2t(
    field: DiscreteField,
    region: Region = None,
    workspace: NormWorkspace | None = None,
) -> float:
    """L^2-in-time norm of the per-level spatial H^-1 norm."""
    ws = workspace or NormWorkspace(field.grid, region)
    u = ws.restrict(field)
    return math.sqrt(max(float(np.sum(ws.w_t * ws.spatial_dual_sq(u))), 0.0))


def sup_time_l2(
    field: DiscreteField,
    region: Region = None,
    workspace: NormWorkspace | None = None,
) -> float:
    """max over levels of the spatial L^2 norm."""
    ws = workspace or NormWorkspace(field.grid, region)
    u = ws.restrict(field)
    return float(np.sqrt(np.max(np.sum(ws.w_x * u**2, axis=1))))


@dataclass
class WeakConvergenceReport:
    dual_norms: list[float]
    l2_norms: list[float]
    verdict: str
    decay_ratio: float | None = None
    coarsening: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dual_norms": list(self.dual_norms),
            "l2_norms": list(self.l2_norms),
            "verdict": self.verdict,
            "decay_ratio": self.decay_ratio,
            "coarsening": dict(self.coarsening),
        }


def geometric_ratio(values: Sequence[float]) -> float:
    """exp of the least-squares slope of log(values) against the index."""
    logs = np.log(np.maximum(np.asarray(values, dtype=float), 1e-300))
    idx = np.arange(len(logs), dtype=float)
    slope = np.polyfit(idx, logs, 1)[0]
    return float(np.exp(slope))


def classify_weak_convergence(
    dual_norms: Sequence[float],
    l2_norms: Sequence[float],
    scale: float = 1.0,
    growth_limit: float = 2.0,
    ratio_limit: float = 0.8,
    final_fraction: float = 0.1,
    zero_tol: float = 1e-12,
) -> tuple[str, float | None]:
    """
    Verdict and decay ratio from precomputed norms of f_m - f and f_m.

    The sequence counts as bounded while max ||f_m|| <= growth_limit * ||f_1||.
    It is WEAKLY_CONVERGENT when every dual norm is below ``zero_tol`` times
    ``scale``, or when the fitted geometric decay ratio is below ``ratio_limit``
    and the last dual norm is below ``final_fraction`` times the first.
    """
    if not dual_norms:
        raise ConfigError("Empty sequence", stage="norms")
    if l2_norms[0] > 0 and max(l2_norms) > growth_limit * l2_norms[0]:
        logger.warning(
            f"Weak convergence hypothesis violation: L2 norms grow to "
            f"{max(l2_norms):.3g} from {l2_norms[0]:.3g}"
        )
        return HYPOTHESIS_VIOLATION, None
    if max(dual_norms) <= zero_tol * max(scale, 1.0):
        return WEAKLY_CONVERGENT, None
    if len(dual_norms) < 2:
        return NOT_CONVERGENT, None
    ratio = geometric_ratio(dual_norms)
    if ratio < ratio_limit and dual_norms[-1] < final_fraction * dual_norms[0]:
        return WEAKLY_CONVERGENT, ratio
    return NOT_CONVERGENT, ratio


def weak_convergence_check(
    sequence: Sequence[DiscreteField],
    limit: DiscreteField,
    region: Region = None,
    workspace: NormWorkspace | None = None,
    growth_limit: float = 2.0,
    ratio_limit: float = 0.8,
    final_fraction: float = 0.1,
    zero_tol: float = 1e-12,
) -> WeakConvergenceReport:
    """Weak L^2 convergence test through dual norms of f_m - f (see ``classify_weak_convergence``)."""
    if not sequence:
        raise ConfigError("Empty sequence", stage="norms")
    ws = workspace or NormWorkspace(limit.grid, region)
    mask = ws.mask
    l2 = [lp_norm(f, mask, 2.0) for f in sequence]
    duals = [ws.dual_norm(f - limit) for f in sequence]
    scale = max(max(l2), lp_norm(limit, mask, 2.0))
    verdict, ratio = classify_weak_convergence(
        duals, l2, scale, growth_limit, ratio_limit, final_fraction, zero_tol
    )
    logger.info(f"Weak convergence check: {verdict} (ratio {ratio})")
    return WeakConvergenceReport(
        dual_norms=duals,
        l2_norms=l2,
        verdict=verdict,
        decay_ratio=ratio,
        coarsening=ws.coarsening,
    )


def w1par_norm(
    field: DiscreteField,
    q: float = 2.0,
    region: Region = None,
    workspace: NormWorkspace | None = None,
) -> float:
    """
    ||f||_Lq + ||grad f||_Lq + ||dt f||_{L2(H^-1)}.

    The time-derivative part uses the 2-based spatial dual norm for every q.
    """
    ws = workspace or NormWorkspace(field.grid, region)
    grad_abs = DiscreteField(field.grid, np.sqrt(np.sum(field.gradient() ** 2, axis=0)))
    dt_f = DiscreteField(field.grid, field.time_derivative())
    return (
        lp_norm(field, ws.mask, q)
        + lp_norm(grad_abs, ws.mask, q)
        + spatial_dual_norm_l2t(dt_f, workspace=ws)
    )
