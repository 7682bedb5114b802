"""Coefficient fields (a, b, d) for parabolic equations with lower-order terms.

Every field is a vectorized, stateless sampler ``(y, s) -> (a, b, d)`` carrying
the bound constants ``lam`` and ``Lam``:

    1 <= xi . a xi <= lam for unit xi,   |b|^2 <= Lam,   d <= 0,   d^2 <= Lam

Bounds are checked once at construction, from the palette or the amplitude,
and can be spot-checked on random samples with :func:`validate`.

Classes:
    CoefficientField: Abstract sampler
    ConstantField: Same triple everywhere
    PeriodicField: Smooth field of period 1 in every coordinate
    CheckerboardField: i.i.d. unit space-time cells behind a random shift
    LaminateField: Layers stacked along one axis
    RescaledField: ``base(x / eps, t / eps^2)``
    CoefficientFieldFactory: Construction from configuration entries

Example:
    >>> field = make_checkerboard([1.0, 4.0], None, [-1.0, -2.0], seed=7, Lam=4.0)
    >>> a, b, d = field.sample(np.array([[0.3]]), np.array([0.1]))
    >>> field_eps = rescale(field, 0.25)
"""

import logging
from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np

from src.errors import ConfigError, FieldBoundError

logger = logging.getLogger(__name__)

BOUND_TOL = 1e-12

ELLIPTICITY = "ellipticity"
SYMMETRY = "symmetry"
B_BOUND = "|b|^2 <= Lambda"
D_SIGN = "d <= 0"
D_BOUND = "d^2 <= Lambda"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def cell_hash(indices: Sequence[np.ndarray], seed: int, stream: int) -> np.ndarray:
    """Counter-based 64-bit hash of integer cell indices, seed and stream id."""
    shape = np.broadcast_shapes(*(np.shape(i) for i in indices)) if indices else ()
    key = _splitmix64(np.atleast_1d(np.uint64(int(seed) & _MASK64)))
    key = _splitmix64(key ^ _splitmix64(np.atleast_1d(np.uint64(stream))))
    h = np.broadcast_to(key, shape).copy() if shape else key.copy()
    for idx in indices:
        counters = np.ascontiguousarray(
            np.broadcast_to(idx, shape), dtype=np.int64
        ).view(np.uint64)
        h = _splitmix64(h ^ counters)
    return h if shape else h[0]


def _as_matrix(value: Any, spatial_dim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(spatial_dim)
    return arr.reshape(spatial_dim, spatial_dim)


def _as_vector(value: Any, spatial_dim: int) -> np.ndarray:
    if value is None:
        return np.zeros(spatial_dim)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(spatial_dim, float(arr))
    return arr.reshape(spatial_dim)


def _check_matrix(a: np.ndarray, lam: float, where: str) -> None:
    if not np.allclose(a, a.T, atol=BOUND_TOL, rtol=0.0):
        raise FieldBoundError(f"{where}: a is not symmetric", SYMMETRY, matrix=a.tolist())
    eig = np.linalg.eigvalsh(a)
    if eig[0] < 1.0 - BOUND_TOL or eig[-1] > lam + BOUND_TOL:
        raise FieldBoundError(
            f"{where}: spectrum [{eig[0]:.6g}, {eig[-1]:.6g}] outside [1, {lam:g}]",
            ELLIPTICITY,
            eigenvalues=eig.tolist(),
        )


def _check_lower_order(b: np.ndarray, d: float, Lam: float, where: str) -> None:
    b2 = float(b @ b)
    if b2 > Lam + BOUND_TOL:
        raise FieldBoundError(f"{where}: |b|^2 = {b2:g} > Lambda = {Lam:g}", B_BOUND)
    if d > BOUND_TOL:
        raise FieldBoundError(f"{where}: d = {d:g} is positive", D_SIGN)
    if d * d > Lam + BOUND_TOL:
        raise FieldBoundError(f"{where}: d^2 = {d * d:g} > Lambda = {Lam:g}", D_BOUND)


class CoefficientField(ABC):
    """Abstract space-time coefficient sampler.

    Attributes:
        spatial_dim: d
        lam: Upper ellipticity constant
        Lam: Lower-order bound
        kind: Generator name
        seed: Seed of the realization (0 for deterministic fields)
        shift: Space-time offset applied before evaluation
    """

    kind: ClassVar[str] = "abstract"

    def __init__(
        self,
        spatial_dim: int,
        lam: float,
        Lam: float,
        seed: int = 0,
        shift: np.ndarray | None = None,
    ):
        if spatial_dim not in (1, 2):
            raise ConfigError(f"Unsupported spatial dimension {spatial_dim}")
        if not lam >= 1.0:
            raise ConfigError(f"Ellipticity constant lam must be >= 1, got {lam}")
        if not Lam > 0.0:
            raise ConfigError(f"Lower-order bound Lam must be positive, got {Lam}")
        self.spatial_dim = spatial_dim
        self.lam = float(lam)
        self.Lam = float(Lam)
        self.seed = int(seed)
        self.shift = (
            np.zeros(spatial_dim + 1) if shift is None else np.asarray(shift, float)
        )

    @abstractmethod
    def sample(
        self, y: np.ndarray, s: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Evaluate the coefficients.

        Args:
            y: Points of shape ``(..., d)``
            s: Times of shape ``(...)``

        Returns:
            ``(a, b, d)`` of shapes ``(..., d, d)``, ``(..., d)`` and ``(...)``
        """

    @property
    def time_invariant(self) -> bool:
        return False

    @property
    def constant_diffusion(self) -> np.ndarray | None:
        """The matrix a when it does not depend on (y, s), else None."""
        return None

    @property
    def spatial_period(self) -> float | None:
        """Period in every spatial coordinate, None for non-periodic fields."""
        return None

    @property
    def temporal_period(self) -> float | None:
        return None

    def sample_point(
        self, y: Sequence[float], s: float
    ) -> tuple[np.ndarray, np.ndarray, float]:
        a, b, d = self.sample(np.asarray(y, float)[np.newaxis], np.array([s], float))
        return a[0], b[0], float(d[0])

    def _prepare(self, y: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        if y.shape[-1] != self.spatial_dim:
            raise ValueError(
                f"Points have dimension {y.shape[-1]}, field has {self.spatial_dim}"
            )
        return y + self.shift[: self.spatial_dim], s + self.shift[-1]

    def describe(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "spatial_dim": self.spatial_dim,
            "lam": self.lam,
            "Lam": self.Lam,
            "seed": self.seed,
            "shift": self.shift.tolist(),
        }


class ConstantField(CoefficientField):
    kind = "constant"

    def __init__(
        self,
        a0: np.ndarray,
        b0: np.ndarray,
        d0: float,
        lam: float,
        Lam: float,
    ):
        super().__init__(a0.shape[0], lam, Lam)
        self.a0 = a0
        self.b0 = b0
        self.d0 = float(d0)

    @property
    def time_invariant(self) -> bool:
        return True

    @property
    def constant_diffusion(self) -> np.ndarray:
        return self.a0

    @property
    def spatial_period(self) -> float:
        return 1.0

    @property
    def temporal_period(self) -> float:
        return 1.0

    def sample(self, y, s):
        y, s = self._prepare(y, s)
        batch = y.shape[:-1]
        a = np.broadcast_to(self.a0, (*batch, self.spatial_dim, self.spatial_dim))
        b = np.broadcast_to(self.b0, (*batch, self.spatial_dim))
        return a.copy(), b.copy(), np.full(batch, self.d0)


class PeriodicField(CoefficientField):
    """a = a0 + alpha sin(2 pi y1) cos(2 pi s) M, with optional oscillating b and d.

    b = b0 + b_amplitude cos(2 pi y1) e1 and d = d0 + d_amplitude cos(2 pi y1).
    With ``time_dependent=False`` the cos(2 pi s) factor is dropped.
    """

    kind = "periodic"

    def __init__(
        self,
        a0: np.ndarray,
        alpha: float,
        M: np.ndarray,
        b0: np.ndarray,
        d0: float,
        lam: float,
        Lam: float,
        b_amplitude: float = 0.0,
        d_amplitude: float = 0.0,
        time_dependent: bool = True,
    ):
        super().__init__(a0.shape[0], lam, Lam)
        self.a0 = a0
        self.alpha = float(alpha)
        self.M = M
        self.b0 = b0
        self.d0 = float(d0)
        self.b_amplitude = float(b_amplitude)
        self.d_amplitude = float(d_amplitude)
        self.time_dependent = time_dependent

    @property
    def time_invariant(self) -> bool:
        return not self.time_dependent or self.alpha == 0.0

    @property
    def constant_diffusion(self) -> np.ndarray | None:
        if self.alpha == 0.0 or not np.any(self.M):
            return self.a0
        return None

    @property
    def spatial_period(self) -> float:
        return 1.0

    @property
    def temporal_period(self) -> float:
        return 1.0

    def sample(self, y, s):
        y, s = self._prepare(y, s)
        wave = np.sin(2 * np.pi * y[..., 0])
        if self.time_dependent:
            wave = wave * np.cos(2 * np.pi * s)
        a = self.a0 + (self.alpha * wave)[..., np.newaxis, np.newaxis] * self.M
        profile = np.cos(2 * np.pi * y[..., 0])
        e1 = np.zeros(self.spatial_dim)
        e1[0] = 1.0
        b = self.b0 + (self.b_amplitude * profile)[..., np.newaxis] * e1
        d = self.d0 + self.d_amplitude * profile
        return a, b, d

    def describe(self):
        info = super().describe()
        info.update(alpha=self.alpha, time_dependent=self.time_dependent)
        return info


class CheckerboardField(CoefficientField):
    """Piecewise-constant field on unit cells with i.i.d. palette draws.

    The cell of (y, s) is ``floor(y + shift_y), floor(s + shift_s)``; each of a, b
    and d is drawn from its own palette by a counter-based hash of the cell
    index and the seed, so evaluation order never changes the realization.
    ``period_L`` reduces spatial indices modulo L and time indices modulo L^2.
    """

    kind = "checkerboard"

    def __init__(
        self,
        a_palette: np.ndarray,
        b_palette: np.ndarray,
        d_palette: np.ndarray,
        seed: int,
        lam: float,
        Lam: float,
        time_dependent: bool = True,
        shift: np.ndarray | None = None,
        period_L: int | None = None,
    ):
        spatial_dim = a_palette.shape[1]
        if shift is None:
            shift = np.random.default_rng(seed).random(spatial_dim + 1)
        super().__init__(spatial_dim, lam, Lam, seed=seed, shift=shift)
        self.a_palette = a_palette
        self.b_palette = b_palette
        self.d_palette = d_palette
        self.time_dependent = time_dependent
        self.period_L = period_L

    @property
    def time_invariant(self) -> bool:
        return not self.time_dependent

    @property
    def constant_diffusion(self) -> np.ndarray | None:
        if np.all(self.a_palette == self.a_palette[0]):
            return self.a_palette[0]
        return None

    @property
    def spatial_period(self) -> float | None:
        return None if self.period_L is None else float(self.period_L)

    @property
    def temporal_period(self) -> float | None:
        if self.period_L is None:
            return None
        return 1.0 if not self.time_dependent else float(self.period_L**2)

    def cell_indices(self, y: np.ndarray, s: np.ndarray) -> list[np.ndarray]:
        """Integer cell indices of already-shifted points."""
        idx = [np.floor(y[..., k]).astype(np.int64) for k in range(self.spatial_dim)]
        if self.time_dependent:
            idx.append(np.floor(s).astype(np.int64))
        if self.period_L is not None:
            L = self.period_L
            idx = [i % L for i in idx[: self.spatial_dim]] + [
                i % (L * L) for i in idx[self.spatial_dim :]
            ]
        return idx

    def cell_choice(self, indices: Sequence[np.ndarray], stream: int) -> np.ndarray:
        """Palette position drawn for each cell; stream 0, 1, 2 are a, b, d."""
        sizes = (len(self.a_palette), len(self.b_palette), len(self.d_palette))
        h = cell_hash(indices, self.seed, stream)
        return (h % np.uint64(sizes[stream])).astype(np.intp)

    def sample(self, y, s):
        y, s = self._prepare(y, s)
        idx = self.cell_indices(y, s)
        a = self.a_palette[self.cell_choice(idx, 0)]
        b = self.b_palette[self.cell_choice(idx, 1)]
        d = self.d_palette[self.cell_choice(idx, 2)]
        return a, b, d

    def with_shift(self, shift: Sequence[float]) -> "CheckerboardField":
        return CheckerboardField(
            self.a_palette,
            self.b_palette,
            self.d_palette,
            self.seed,
            self.lam,
            self.Lam,
            time_dependent=self.time_dependent,
            shift=np.asarray(shift, float),
            period_L=self.period_L,
        )

    def reseeded(self, seed: int) -> "CheckerboardField":
        """Fresh realization with the same palettes; the shift is redrawn from ``seed``."""
        return CheckerboardField(
            self.a_palette,
            self.b_palette,
            self.d_palette,
            seed,
            self.lam,
            self.Lam,
            time_dependent=self.time_dependent,
            period_L=self.period_L,
        )

    def periodize(self, L: int) -> "CheckerboardField":
        """Same realization folded onto an L-torus (L^2 in time)."""
        if L < 1:
            raise ConfigError(f"Torus size must be >= 1, got {L}")
        return CheckerboardField(
            self.a_palette,
            self.b_palette,
            self.d_palette,
            self.seed,
            self.lam,
            self.Lam,
            time_dependent=self.time_dependent,
            shift=self.shift,
            period_L=int(L),
        )

    def describe(self):
        info = super().describe()
        info.update(
            time_dependent=self.time_dependent,
            period_L=self.period_L,
            palette_sizes=[
                len(self.a_palette),
                len(self.b_palette),
                len(self.d_palette),
            ],
        )
        return info


class LaminateField(CoefficientField):
    """Time-independent layers of equal thickness along ``axis``, period 1."""

    kind = "laminate"

    def __init__(
        self,
        layers: np.ndarray,
        axis: int,
        b0: np.ndarray,
        d0: float,
        lam: float,
        Lam: float,
    ):
        super().__init__(layers.shape[1], lam, Lam)
        self.layers = layers
        self.axis = axis
        self.b0 = b0
        self.d0 = float(d0)

    @property
    def time_invariant(self) -> bool:
        return True

    @property
    def constant_diffusion(self) -> np.ndarray | None:
        if np.all(self.layers == self.layers[0]):
            return self.layers[0]
        return None

    @property
    def spatial_period(self) -> float:
        return 1.0

    @property
    def temporal_period(self) -> float:
        return 1.0

    def sample(self, y, s):
        y, s = self._prepare(y, s)
        frac = y[..., self.axis] - np.floor(y[..., self.axis])
        n_layers = len(self.layers)
        j = np.minimum((frac * n_layers).astype(np.intp), n_layers - 1)
        batch = y.shape[:-1]
        b = np.broadcast_to(self.b0, (*batch, self.spatial_dim)).copy()
        return self.layers[j], b, np.full(batch, self.d0)


class RescaledField(CoefficientField):
    """The parabolic rescaling ``base(x / epsilon, t / epsilon^2)``."""

    kind = "rescaled"

    def __init__(self, base: CoefficientField, epsilon: float):
        super().__init__(base.spatial_dim, base.lam, base.Lam, seed=base.seed)
        self.base = base
        self.epsilon = float(epsilon)

    @property
    def time_invariant(self) -> bool:
        return self.base.time_invariant

    @property
    def constant_diffusion(self) -> np.ndarray | None:
        return self.base.constant_diffusion

    @property
    def spatial_period(self) -> float | None:
        period = self.base.spatial_period
        return None if period is None else period * self.epsilon

    @property
    def temporal_period(self) -> float | None:
        period = self.base.temporal_period
        return None if period is None else period * self.epsilon**2

    def sample(self, y, s):
        y = np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        return self.base.sample(y / self.epsilon, s / self.epsilon**2)

    def describe(self):
        info = self.base.describe()
        info["epsilon"] = self.epsilon
        return info


def make_constant(
    a0: Any,
    b0: Any = None,
    d0: float = 0.0,
    lam: float | None = None,
    Lam: float = 1.0,
    spatial_dim: int | None = None,
    check: bool = True,
) -> ConstantField:
    """
    Constant coefficient triple.

    Args:
        a0: Scalar (times identity) or d x d symmetric matrix
        b0: Drift vector (zero by default)
        d0: Zeroth-order coefficient (<= 0)
        lam: Ellipticity constant, defaults to max(1, largest eigenvalue of a0)
        Lam: Lower-order bound
        spatial_dim: Needed when a0 is a scalar (defaults to 1)
        check: Validate the bounds (disable only to probe ``validate``)

    Raises:
        FieldBoundError: Naming the violated constraint
    """
    a_arr = np.asarray(a0, dtype=float)
    dim = spatial_dim or (a_arr.shape[0] if a_arr.ndim == 2 else 1)
    a = _as_matrix(a0, dim)
    b = _as_vector(b0, dim)
    if lam is None:
        lam = max(1.0, float(np.linalg.eigvalsh(0.5 * (a + a.T))[-1]))
    if check:
        _check_matrix(a, lam, "constant field")
        _check_lower_order(b, float(d0), Lam, "constant field")
    return ConstantField(a, b, d0, lam, Lam)


def make_periodic(
    a0: Any = 2.0,
    alpha: float = 0.5,
    M: Any = None,
    b0: Any = None,
    d0: float = 0.0,
    lam: float = 4.0,
    Lam: float = 1.0,
    spatial_dim: int = 1,
    b_amplitude: float = 0.0,
    d_amplitude: float = 0.0,
    time_dependent: bool = True,
) -> PeriodicField:
    """
    Smooth periodic field a = a0 + alpha sin(2 pi y1) cos(2 pi s) M.

    The spectrum of a0 + c M is checked at c = +-alpha, which bounds it for
    every c in between (extreme eigenvalues are concave/convex in c).

    Raises:
        FieldBoundError: Amplitudes breaking a bound
    """
    a0_m = _as_matrix(a0, spatial_dim)
    M_m = np.eye(spatial_dim) if M is None else _as_matrix(M, spatial_dim)
    if not np.allclose(M_m, M_m.T, atol=BOUND_TOL, rtol=0.0):
        raise FieldBoundError("periodic field: M is not symmetric", SYMMETRY)
    for c in (-alpha, alpha):
        _check_matrix(a0_m + c * M_m, lam, f"periodic field (amplitude {c:+g})")
    b = _as_vector(b0, spatial_dim)
    e1 = np.zeros(spatial_dim)
    e1[0] = 1.0
    for c in (-b_amplitude, b_amplitude):
        for dd in (d0 - abs(d_amplitude), d0 + abs(d_amplitude)):
            _check_lower_order(b + c * e1, dd, Lam, "periodic field")
    return PeriodicField(
        a0_m,
        alpha,
        M_m,
        b,
        d0,
        lam,
        Lam,
        b_amplitude=b_amplitude,
        d_amplitude=d_amplitude,
        time_dependent=time_dependent,
    )


def make_checkerboard(
    a_values: Sequence[Any],
    b_values: Sequence[Any] | None,
    d_values: Sequence[float] | None,
    seed: int,
    lam: float | None = None,
    Lam: float = 1.0,
    spatial_dim: int = 1,
    time_dependent: bool = True,
) -> CheckerboardField:
    """
    Random checkerboard on unit space-time cells.

    Args:
        a_values: Palette of scalars or d x d matrices
        b_values: Palette of drift vectors (zero drift if None)
        d_values: Palette of d values (zero if None)
        seed: 64-bit seed for the cell hash and the random shift
        lam: Ellipticity constant, defaults to the largest palette eigenvalue
        Lam: Lower-order bound
        spatial_dim: Used when the palette holds scalars
        time_dependent: False gives cells that only depend on space

    Raises:
        FieldBoundError: Empty palette or palette entry breaking a bound
    """
    if not a_values:
        raise FieldBoundError("checkerboard: empty a palette", "palette")
    first = np.asarray(a_values[0], dtype=float)
    dim = first.shape[0] if first.ndim == 2 else spatial_dim
    a_pal = np.stack([_as_matrix(v, dim) for v in a_values])
    b_pal = np.stack([_as_vector(v, dim) for v in (b_values or [None])])
    d_pal = np.asarray(list(d_values) if d_values else [0.0], dtype=float)
    if lam is None:
        lam = max(1.0, max(float(np.linalg.eigvalsh(0.5 * (a + a.T))[-1]) for a in a_pal))
    for k, a in enumerate(a_pal):
        _check_matrix(a, lam, f"checkerboard a palette entry {k}")
    for b in b_pal:
        for d in d_pal:
            _check_lower_order(b, float(d), Lam, "checkerboard palette")
    field = CheckerboardField(
        a_pal, b_pal, d_pal, seed, lam, Lam, time_dependent=time_dependent
    )
    logger.debug(
        f"Checkerboard field: seed={seed}, shift={np.round(field.shift, 6).tolist()}"
    )
    return field


def make_laminate(
    layers: Sequence[Any],
    axis: int = 0,
    b0: Any = None,
    d0: float = 0.0,
    lam: float | None = None,
    Lam: float = 1.0,
    spatial_dim: int = 1,
) -> LaminateField:
    """
    Layered field varying in coordinate ``axis`` only.

    For scalar layers the effective matrix is the harmonic mean across the
    layers and the arithmetic mean along them.
    """
    if not layers:
        raise FieldBoundError("laminate: no layers given", "palette")
    if not 0 <= axis < spatial_dim:
        raise ConfigError(f"Laminate axis {axis} outside dimension {spatial_dim}")
    mats = np.stack([_as_matrix(v, spatial_dim) for v in layers])
    if lam is None:
        lam = max(1.0, max(float(np.linalg.eigvalsh(m)[-1]) for m in mats))
    for k, m in enumerate(mats):
        _check_matrix(m, lam, f"laminate layer {k}")
    b = _as_vector(b0, spatial_dim)
    _check_lower_order(b, d0, Lam, "laminate")
    return LaminateField(mats, axis, b, d0, lam, Lam)


def rescale(field: CoefficientField, epsilon: float) -> RescaledField:
    """Parabolic rescaling with 0 < epsilon <= 1."""
    if not 0.0 < epsilon <= 1.0:
        raise ConfigError(f"Scale epsilon must lie in (0, 1], got {epsilon}")
    return RescaledField(field, epsilon)


@dataclass
class ValidationReport:
    """Bounds observed on random samples of a field."""

    n_samples: int
    rayleigh_min: float
    rayleigh_max: float
    asymmetry_max: float
    b2_max: float
    d_max: float
    d2_max: float
    lam: float
    Lam: float
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_samples": self.n_samples,
            "rayleigh_min": self.rayleigh_min,
            "rayleigh_max": self.rayleigh_max,
            "asymmetry_max": self.asymmetry_max,
            "b2_max": self.b2_max,
            "d_max": self.d_max,
            "d2_max": self.d2_max,
            "lam": self.lam,
            "Lam": self.Lam,
            "violations": list(self.violations),
            "passed": self.passed,
        }


def validate(
    field: CoefficientField,
    n_samples: int = 1000,
    rng_seed: int = 0,
    extent: float = 4.0,
) -> ValidationReport:
    """
    Spot-check the structural bounds on random (y, s, xi).

    Points are drawn uniformly from ``[-extent, extent)^(d+1)``.

    Raises:
        ConfigError: n_samples < 1
    """
    if n_samples < 1:
        raise ConfigError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(rng_seed)
    dim = field.spatial_dim
    y = rng.uniform(-extent, extent, size=(n_samples, dim))
    s = rng.uniform(-extent, extent, size=n_samples)
    xi = rng.normal(size=(n_samples, dim))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)

    a, b, d = field.sample(y, s)
    rayleigh = np.einsum("ni,nij,nj->n", xi, a, xi)
    asym = np.abs(a - np.swapaxes(a, -1, -2)).max(axis=(-1, -2))
    b2 = np.einsum("ni,ni->n", b, b)

    report = ValidationReport(
        n_samples=n_samples,
        rayleigh_min=float(rayleigh.min()),
        rayleigh_max=float(rayleigh.max()),
        asymmetry_max=float(asym.max()),
        b2_max=float(b2.max()),
        d_max=float(d.max()),
        d2_max=float((d * d).max()),
        lam=field.lam,
        Lam=field.Lam,
    )
    if report.asymmetry_max > BOUND_TOL:
        report.violations.append(SYMMETRY)
    if report.rayleigh_min < 1.0 - BOUND_TOL or report.rayleigh_max > field.lam + BOUND_TOL:
        report.violations.append(ELLIPTICITY)
    if report.b2_max > field.Lam + BOUND_TOL:
        report.violations.append(B_BOUND)
    if report.d_max > BOUND_TOL:
        report.violations.append(D_SIGN)
    if report.d2_max > field.Lam + BOUND_TOL:
        report.violations.append(D_BOUND)

    if report.violations:
        logger.warning(f"Field validation violation: {', '.join(report.violations)}")
    else:
        logger.info(f"Field validation passed on {n_samples} samples ({field.kind})")
    return report


class CoefficientFieldFactory:
    """Factory building fields from declarative configuration entries."""

    _builders: ClassVar = {
        "constant": "_constant",
        "periodic": "_periodic",
        "checkerboard": "_checkerboard",
        "laminate": "_laminate",
    }

    @classmethod
    def from_spec(
        cls, spec: Mapping[str, Any], seed: int | None = None, check: bool = True
    ) -> CoefficientField:
        """
        Create a field from a configuration mapping.

        Args:
            spec: Mapping with ``kind`` plus the generator parameters
            seed: Overrides ``spec["seed"]`` for random generators
            check: Passed to generators that support skipping bound checks

        Returns:
            The coefficient field
        """
        kind = str(spec.get("kind", "")).lower()
        if kind not in cls._builders:
            raise ConfigError(
                f"Unknown field kind '{kind}'", stage="field", known=list(cls._builders)
            )
        builder = getattr(cls, cls._builders[kind])
        return builder(spec, seed, check)

    @staticmethod
    def _constant(spec, seed, check):
        return make_constant(
            spec.get("a", 1.0),
            spec.get("b"),
            spec.get("d", 0.0),
            lam=spec.get("lam"),
            Lam=spec.get("Lam", 1.0),
            spatial_dim=spec.get("dim"),
            check=check,
        )

    @staticmethod
    def _periodic(spec, seed, check):
        return make_periodic(
            a0=spec.get("a", 2.0),
            alpha=spec.get("alpha", 0.5),
            M=spec.get("M"),
            b0=spec.get("b"),
            d0=spec.get("d", 0.0),
            lam=spec.get("lam") or 4.0,
            Lam=spec.get("Lam", 1.0),
            spatial_dim=spec.get("dim") or 1,
            b_amplitude=spec.get("b_amplitude", 0.0),
            d_amplitude=spec.get("d_amplitude", 0.0),
            time_dependent=spec.get("time_dependent", True),
        )

    @staticmethod
    def _checkerboard(spec, seed, check):
        field = make_checkerboard(
            spec.get("a_values") or [1.0],
            spec.get("b_values"),
            spec.get("d_values"),
            seed=spec.get("seed", 0) if seed is None else seed,
            lam=spec.get("lam"),
            Lam=spec.get("Lam", 1.0),
            spatial_dim=spec.get("dim") or 1,
            time_dependent=spec.get("time_dependent", True),
        )
        period_L = spec.get("period_L")
        return field.periodize(period_L) if period_L else field

    @staticmethod
    def _laminate(spec, seed, check):
        return make_laminate(
            spec.get("layers") or [1.0, 4.0],
            axis=spec.get("axis", 0),
            b0=spec.get("b"),
            d0=spec.get("d", 0.0),
            lam=spec.get("lam"),
            Lam=spec.get("Lam", 1.0),
            spatial_dim=spec.get("dim") or 1,
        )
