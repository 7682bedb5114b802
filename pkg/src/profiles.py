"""
Named analytic boundary profiles f(x, t) for Cauchy-Dirichlet data.

Profiles are smooth, so they lie in every W^{1,q}_par space the Meyers
probe asks about.
"""

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from dataclasses import field as dataclass_field
from typing import Any, ClassVar

import numpy as np

from src.errors import ConfigError
from src.mesh import DiscreteField, SpaceTimeGrid

logger = logging.getLogger(__name__)


def _affine(xs, t, constant=0.0, gradient=None, time_slope=0.0):
    g = np.ones(len(xs)) if gradient is None else np.asarray(gradient, dtype=float)
    if g.shape != (len(xs),):
        raise ConfigError(f"affine profile: gradient must have {len(xs)} entries")
    return constant + sum(gk * xk for gk, xk in zip(g, xs, strict=True)) + time_slope * t


def _gaussian_bump(xs, t, amplitude=1.0, center=None, width=0.15, time_decay=0.0):
    c = np.full(len(xs), 0.5) if center is None else np.asarray(center, dtype=float)
    if not width > 0:
        raise ConfigError(f"gaussian-bump profile: width must be positive, got {width}")
    dist2 = sum((xk - ck) ** 2 for xk, ck in zip(xs, c, strict=True))
    return amplitude * np.exp(-dist2 / (2.0 * width**2)) * np.exp(-time_decay * t)


def _sine_sheet(xs, t, amplitude=1.0, wavenumber=1.0, axis=0, time_frequency=0.0, offset=0.0):
    if not 0 <= axis < len(xs):
        raise ConfigError(f"sine-sheet profile: axis {axis} outside dimension {len(xs)}")
    return offset + amplitude * np.sin(np.pi * wavenumber * xs[axis]) * np.cos(
        2.0 * np.pi * time_frequency * t
    )


@dataclass(frozen=True)
class BoundaryProfile:
    """A named profile with its parameters; calling it samples f on a grid."""

    name: str
    params: Mapping[str, Any] = dataclass_field(default_factory=dict)
    _profiles: ClassVar[dict[str, Callable[..., np.ndarray]]] = {
        "affine": _affine,
        "gaussian-bump": _gaussian_bump,
        "sine-sheet": _sine_sheet,
    }

    def __post_init__(self):
        if self.name not in self._profiles:
            raise ConfigError(
                f"Unknown boundary profile '{self.name}'",
                stage="profile",
                known=sorted(self._profiles),
            )

    def __call__(self, grid: SpaceTimeGrid) -> DiscreteField:
        t, *xs = grid.coordinates()
        try:
            values = self._profiles[self.name](xs, t, **dict(self.params))
        except TypeError as exc:
            raise ConfigError(
                f"Bad parameters for profile '{self.name}': {exc}", stage="profile"
            ) from exc
        return DiscreteField(grid, np.broadcast_to(values, grid.shape).astype(float))

    def describe(self) -> dict[str, Any]:
        return {"name": self.name, "params": dict(self.params)}
