"""Sine pseudospectral grid on (0, 1) with homogeneous Dirichlet ends.

Grid points are ``x_j = j / (M + 1)``, ``j = 1..M``.  Coefficients follow the
convention ``f(x) = sum_n a_n sin(n pi x)``, i.e. ``a_n = 2 int f sin(n pi x)``,
so that ``||f||^2 = (1/2) sum |a_n|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.fft import dst

__all__ = [
    "SineGrid",
    "StateField",
    "sine_forward",
    "sine_inverse",
    "h_norm",
    "laplacian_apply",
    "dst_forward",
    "dst_inverse",
]


@dataclass(frozen=True)
class SineGrid:
    n_modes: int

    def __post_init__(self):
        if int(self.n_modes) != self.n_modes or self.n_modes < 8:
            raise ValueError("SineGrid needs an integer n_modes >= 8")
        object.__setattr__(self, "n_modes", int(self.n_modes))

    @property
    def M(self) -> int:
        return self.n_modes

    @property
    def h(self) -> float:
        return 1.0 / (self.n_modes + 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(1, self.n_modes + 1) * self.h

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """``n pi`` for ``n = 1..M``."""
        return np.pi * np.arange(1, self.n_modes + 1)

    def refine(self) -> "SineGrid":
        return SineGrid(2 * self.n_modes + 1)


def dst_forward(values, axis=-1):
    """Point values -> sine coefficients ``a_n`` (DST-I)."""
    values = np.asarray(values)
    n = values.shape[axis]
    return dst(values, type=1, axis=axis) / (n + 1)


def dst_inverse(coeffs, axis=-1):
    """Sine coefficients ``a_n`` -> point values."""
    return dst(np.asarray(coeffs), type=1, axis=axis) / 2.0


@dataclass(frozen=True)
class StateField:
    """Complex grid function; ``representation`` is ``"point"`` or ``"coefficient"``."""

    grid: SineGrid
    values: np.ndarray = field(repr=False)
    representation: str = "point"

    def __post_init__(self):
        if self.representation not in ("point", "coefficient"):
            raise ValueError("representation must be 'point' or 'coefficient'")
        v = np.asarray(self.values)
        if v.shape != (self.grid.M,):
            raise ValueError(f"expected {self.grid.M} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: SineGrid, func) -> "StateField":
        return cls(grid, np.asarray(func(grid.x)), "point")

    def points(self) -> np.ndarray:
        if self.representation == "point":
            return self.values
        return dst_inverse(self.values)

    def coefficients(self) -> np.ndarray:
        if self.representation == "coefficient":
            return self.values
        return dst_forward(self.values)

    def to_point(self) -> "StateField":
        return StateField(self.grid, self.points(), "point")

    def to_coefficient(self) -> "StateField":
        return StateField(self.grid, self.coefficients(), "coefficient")


def sine_forward(f: StateField) -> np.ndarray:
    return f.coefficients()


def sine_inverse(grid: SineGrid, coeffs) -> StateField:
    return StateField(grid, dst_inverse(coeffs), "point")


def h_norm(f, s: float = 0.0, grid: SineGrid | None = None) -> float:
    """Discrete ``H^s`` norm ``(1/2 sum |(n pi)^s a_n|^2)^(1/2)``.

    ``f`` is a :class:`StateField` or raw point values on a sine grid.
    """
    if s < 0:
        raise ValueError("s must be non-negative")
    if isinstance(f, StateField):
        a = f.coefficients()
    else:
        a = dst_forward(np.asarray(f))
    n_pi = np.pi * np.arange(1, a.shape[-1] + 1)
    return float(np.sqrt(0.5 * np.sum(np.abs(n_pi**s * a) ** 2)))


def laplacian_apply(f: StateField) -> StateField:
    """``-f''`` in coefficient space: multiply ``a_n`` by ``(n pi)^2``."""
    a = f.coefficients()
    return StateField(f.grid, a * f.grid.wavenumbers**2, "coefficient")
