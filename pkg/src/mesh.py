"""Uniform space-time grids, nodal trajectories and parabolic cylinders.

A grid is node-centered: ``nx`` nodes per spatial axis including the two
Dirichlet boundary nodes, and ``nt`` time levels including the initial one.
Trajectories are stored as one numpy array of shape ``(nt, nx)`` in 1D and
``(nt, nx, nx)`` in 2D, time first.

Classes:
    SpaceTimeGrid: Immutable grid description with coordinate helpers
    DiscreteField: Nodal trajectory on a grid
    CylinderRegion: Parabolic cylinder Q_r = B_r x (t_anchor, t_anchor + r^2]

Example:
    >>> grid = build_grid(1, (0.0, 1.0), 101, (0.0, 0.25), 2501)
    >>> p = DiscreteField.from_function(grid, lambda x, t: x * (1 - x))
    >>> mask = region_mask(grid, CylinderRegion(center=(0.5,), radius=0.25))
"""

import csv
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar

import numpy as np

from src.errors import MeshError

logger = logging.getLogger(__name__)

DEFAULT_C_PAR = 0.5

# Tolerance for half-open interval tests on floating coordinates.
_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform node-centered grid over U x I.

    Attributes:
        spatial_dim: 1 or 2
        box: One (lo, hi) interval per spatial axis, all of equal width
        nx: Nodes per spatial axis, boundary included
        time_interval: (I-, I+)
        nt: Time levels, initial level included
        c_par: Parabolic resolution constant, dt <= c_par * h^2 is expected
    """

    spatial_dim: int
    box: tuple[tuple[float, float], ...]
    nx: int
    time_interval: tuple[float, float]
    nt: int
    c_par: float = DEFAULT_C_PAR

    @property
    def h(self) -> float:
        lo, hi = self.box[0]
        return (hi - lo) / (self.nx - 1)

    @property
    def dt(self) -> float:
        t0, t1 = self.time_interval
        return (t1 - t0) / (self.nt - 1)

    @property
    def width(self) -> float:
        lo, hi = self.box[0]
        return hi - lo

    @property
    def duration(self) -> float:
        return self.time_interval[1] - self.time_interval[0]

    @property
    def resolution_ok(self) -> bool:
        """True when dt <= c_par * h^2."""
        return self.dt <= self.c_par * self.h**2 * (1.0 + 1e-12)

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.nx,) * self.spatial_dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nt, *self.spatial_shape)

    @property
    def n_spatial(self) -> int:
        return self.nx**self.spatial_dim

    @property
    def cell_volume(self) -> float:
        """Space-time volume h^d * dt of one interior node."""
        return self.h**self.spatial_dim * self.dt

    def axis(self, k: int = 0) -> np.ndarray:
        lo, hi = self.box[k]
        return np.linspace(lo, hi, self.nx)

    def times(self) -> np.ndarray:
        t0, t1 = self.time_interval
        return np.linspace(t0, t1, self.nt)

    def time(self, level: int) -> float:
        return self.time_interval[0] + level * self.dt

    def spatial_coordinates(self) -> tuple[np.ndarray, ...]:
        """Nodal coordinate arrays with ``indexing="ij"``."""
        return tuple(
            np.meshgrid(
                *[self.axis(k) for k in range(self.spatial_dim)], indexing="ij"
            )
        )

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Space-time coordinate arrays ``(t, x1[, x2])`` of shape ``self.shape``."""
        axes = [self.times()] + [self.axis(k) for k in range(self.spatial_dim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def node_coordinate(self, index: Sequence[int]) -> np.ndarray:
        """Spatial point of a nodal multi-index."""
        if len(index) != self.spatial_dim:
            raise MeshError(
                f"Index {tuple(index)} does not match dimension {self.spatial_dim}"
            )
        return np.array(
            [self.box[k][0] + index[k] * self.h for k in range(self.spatial_dim)]
        )

    def nearest_index(self, point: Sequence[float]) -> tuple[int, ...]:
        """Nodal multi-index closest to a spatial point, clipped to the box."""
        idx = []
        for k in range(self.spatial_dim):
            i = int(round((point[k] - self.box[k][0]) / self.h))
            idx.append(min(max(i, 0), self.nx - 1))
        return tuple(idx)

    def nearest_level(self, t: float) -> int:
        n = int(round((t - self.time_interval[0]) / self.dt))
        return min(max(n, 0), self.nt - 1)

    def boundary_mask(self) -> np.ndarray:
        """Spatial boolean mask of Dirichlet boundary nodes."""
        mask = np.zeros(self.spatial_shape, dtype=bool)
        for k in range(self.spatial_dim):
            sl: list[slice | int] = [slice(None)] * self.spatial_dim
            sl[k] = 0
            mask[tuple(sl)] = True
            sl[k] = -1
            mask[tuple(sl)] = True
        return mask

    def distance_to_boundary(self) -> np.ndarray:
        """Spatial array of dist(x, dU) for the box."""
        coords = self.spatial_coordinates()
        dist = np.full(self.spatial_shape, np.inf)
        for k, xk in enumerate(coords):
            lo, hi = self.box[k]
            dist = np.minimum(dist, np.minimum(xk - lo, hi - xk))
        return dist

    def refined(self, factor: int = 2) -> "SpaceTimeGrid":
        """Grid with h divided by ``factor`` and dt by ``factor**2``."""
        return build_grid(
            self.spatial_dim,
            self.box,
            (self.nx - 1) * factor + 1,
            self.time_interval,
            (self.nt - 1) * factor**2 + 1,
            c_par=self.c_par,
        )

    def describe(self) -> dict:
        return {
            "spatial_dim": self.spatial_dim,
            "box": [list(b) for b in self.box],
            "nx": self.nx,
            "time_interval": list(self.time_interval),
            "nt": self.nt,
            "h": self.h,
            "dt": self.dt,
            "resolution_ok": self.resolution_ok,
        }


def _normalize_box(
    spatial_dim: int, box: Sequence[float] | Sequence[Sequence[float]]
) -> tuple[tuple[float, float], ...]:
    if len(box) == 2 and all(isinstance(v, (int, float)) for v in box):
        pair = (float(box[0]), float(box[1]))  # type: ignore[arg-type]
        return (pair,) * spatial_dim
    pairs = tuple((float(b[0]), float(b[1])) for b in box)  # type: ignore[index]
    if len(pairs) != spatial_dim:
        raise MeshError(
            f"Box has {len(pairs)} intervals for dimension {spatial_dim}",
            stage="mesh",
        )
    return pairs


def build_grid(
    spatial_dim: int,
    box: Sequence[float] | Sequence[Sequence[float]],
    nx: int,
    time_interval: Sequence[float],
    nt: int,
    c_par: float = DEFAULT_C_PAR,
) -> SpaceTimeGrid:
    """
    Build a uniform space-time grid.

    Args:
        spatial_dim: Spatial dimension d (1 or 2)
        box: ``(lo, hi)`` used on every axis, or one pair per axis
        nx: Nodes per axis (>= 3)
        time_interval: ``(I-, I+)``
        nt: Time levels (>= 2)
        c_par: Resolution constant for the dt <= c_par h^2 warning

    Returns:
        The grid. An under-resolved time step is logged as a warning and
        exposed by ``grid.resolution_ok``.

    Raises:
        MeshError: Degenerate or non-finite box or interval, bad counts
    """
    if spatial_dim not in (1, 2):
        raise MeshError(f"Unsupported spatial dimension {spatial_dim}", stage="mesh")
    if nx < 3 or nt < 2:
        raise MeshError(f"Need nx >= 3 and nt >= 2, got nx={nx}, nt={nt}", stage="mesh")

    pairs = _normalize_box(spatial_dim, box)
    t0, t1 = float(time_interval[0]), float(time_interval[1])
    bounds = [v for pair in pairs for v in pair] + [t0, t1]
    if not all(math.isfinite(v) for v in bounds):
        raise MeshError("Non-finite grid bounds", stage="mesh", bounds=bounds)
    widths = [hi - lo for lo, hi in pairs]
    if any(w <= 0 for w in widths):
        raise MeshError("Degenerate spatial box", stage="mesh", box=pairs)
    if any(abs(w - widths[0]) > 1e-12 * widths[0] for w in widths):
        raise MeshError("Box axes must have equal width", stage="mesh", box=pairs)
    if t1 <= t0:
        raise MeshError("Degenerate time interval", stage="mesh", interval=(t0, t1))

    grid = SpaceTimeGrid(
        spatial_dim=spatial_dim,
        box=pairs,
        nx=int(nx),
        time_interval=(t0, t1),
        nt=int(nt),
        c_par=c_par,
    )
    if not grid.resolution_ok:
        logger.warning(
            f"Parabolic resolution warning: dt={grid.dt:.3e} > "
            f"{c_par} * h^2 = {c_par * grid.h**2:.3e}"
        )
    logger.debug(f"Grid built: d={spatial_dim}, h={grid.h:.4g}, dt={grid.dt:.4g}")
    return grid


@dataclass(eq=False)
class DiscreteField:
    """Nodal trajectory, one spatial array per time level."""

    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise MeshError(
                f"Field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise MeshError("Field contains non-finite values")

    @classmethod
    def zeros(cls, grid: SpaceTimeGrid) -> "DiscreteField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: SpaceTimeGrid, value: float) -> "DiscreteField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(
        cls, grid: SpaceTimeGrid, func: Callable[..., np.ndarray | float]
    ) -> "DiscreteField":
        """Sample ``func(x1[, x2], t)`` (vectorized) at every node."""
        t, *xs = grid.coordinates()
        values = np.broadcast_to(func(*xs, t), grid.shape).astype(float)
        return cls(grid, values.copy())

    def level(self, n: int) -> np.ndarray:
        return self.values[n]

    def _check_same_grid(self, other: "DiscreteField") -> None:
        if other.grid != self.grid:
            raise MeshError("Fields live on different grids")

    def __add__(self, other: "DiscreteField") -> "DiscreteField":
        self._check_same_grid(other)
        return DiscreteField(self.grid, self.values + other.values)

    def __sub__(self, other: "DiscreteField") -> "DiscreteField":
        self._check_same_grid(other)
        return DiscreteField(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "DiscreteField":
        return DiscreteField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "DiscreteField":
        return DiscreteField(self.grid, -self.values)

    def gradient(self) -> np.ndarray:
        """Spatial gradient by ``np.gradient``, shape ``(d, *grid.shape)``."""
        return np.stack(
            [
                np.gradient(self.values, self.grid.h, axis=k + 1)
                for k in range(self.grid.spatial_dim)
            ]
        )

    def time_derivative(self) -> np.ndarray:
        return np.gradient(self.values, self.grid.dt, axis=0)

    def to_npz(self, path: str | Path) -> Path:
        """Save values, axes and times as a numpy archive."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        axes = {f"x{k + 1}": self.grid.axis(k) for k in range(self.grid.spatial_dim)}
        np.savez(path, values=self.values, t=self.grid.times(), **axes)
        return path

    def to_csv(self, path: str | Path) -> Path:
        """Write one row per node and level: ``t, x1[, x2], value``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        coords = [c.ravel() for c in self.grid.coordinates()]
        header = ["t"] + [f"x{k + 1}" for k in range(self.grid.spatial_dim)] + ["value"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in zip(*coords, self.values.ravel(), strict=True):
                writer.writerow([repr(float(v)) for v in row])
        return path


@dataclass(frozen=True)
class CylinderRegion:
    """Parabolic cylinder ``B_r(center) x (t_anchor, t_anchor + r^2]``.

    ``kind="full"`` selects the whole grid regardless of center and radius.
    """

    center: tuple[float, ...]
    radius: float
    kind: str = "interior"
    t_anchor: float = 0.0
    KINDS: ClassVar[tuple[str, ...]] = ("interior", "full")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise MeshError(f"Unknown region kind '{self.kind}'")
        if self.kind == "interior" and not self.radius > 0:
            raise MeshError(f"Region radius must be positive, got {self.radius}")

    @classmethod
    def full(cls, grid: SpaceTimeGrid) -> "CylinderRegion":
        center = tuple(0.5 * (lo + hi) for lo, hi in grid.box)
        return cls(center=center, radius=math.inf, kind="full")

    def scaled(self, factor: float) -> "CylinderRegion":
        """Same center and anchor, radius multiplied by ``factor``."""
        return CylinderRegion(
            center=self.center,
            radius=self.radius * factor,
            kind=self.kind,
            t_anchor=self.t_anchor,
        )

    def fits_in(self, grid: SpaceTimeGrid) -> bool:
        """True when the cylinder lies inside the closed grid domain."""
        if self.kind == "full":
            return True
        inside_space = all(
            lo - _EDGE_TOL <= c - self.radius and c + self.radius <= hi + _EDGE_TOL
            for c, (lo, hi) in zip(self.center, grid.box, strict=True)
        )
        t0, t1 = grid.time_interval
        inside_time = (
            self.t_anchor >= t0 - _EDGE_TOL
            and self.t_anchor + self.radius**2 <= t1 + _EDGE_TOL
        )
        return inside_space and inside_time


def ball_mask(grid: SpaceTimeGrid, center: Sequence[float], r: float) -> np.ndarray:
    """Spatial mask of nodes with |x - center| < r."""
    coords = grid.spatial_coordinates()
    dist2 = sum((xk - ck) ** 2 for xk, ck in zip(coords, center, strict=True))
    return np.asarray(dist2 < r * r - _EDGE_TOL)


def time_window(grid: SpaceTimeGrid, t_anchor: float, r: float) -> np.ndarray:
    """Level mask of t - t_anchor in (0, r^2]."""
    rel = grid.times() - t_anchor
    return (rel > _EDGE_TOL) & (rel <= r * r + _EDGE_TOL)


def region_mask(grid: SpaceTimeGrid, region: CylinderRegion) -> np.ndarray:
    """
    Boolean mask of the grid points inside a region.

    Args:
        grid: Space-time grid
        region: Cylinder or full-domain region

    Returns:
        Array of shape ``grid.shape``; an empty intersection is an all-False mask.
    """
    if region.kind == "full":
        return np.ones(grid.shape, dtype=bool)
    if len(region.center) != grid.spatial_dim:
        raise MeshError(
            f"Region center {region.center} does not match dimension {grid.spatial_dim}"
        )
    space = ball_mask(grid, region.center, region.radius)
    levels = time_window(grid, region.t_anchor, region.radius)
    return levels.reshape((-1,) + (1,) * grid.spatial_dim) & space[np.newaxis]


def region_indices(grid: SpaceTimeGrid, region: CylinderRegion) -> np.ndarray:
    """Rows ``(level, i1[, i2])`` of the points selected by ``region_mask``."""
    return np.argwhere(region_mask(grid, region))
