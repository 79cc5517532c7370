"""Uniform periodic grid on the torus [0, 2*pi) and cell-averaged fields."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridMismatch, NegativeDensity

LENGTH = 2.0 * np.pi


@dataclass(frozen=True)
class PeriodicGrid:
    """Finite-volume decomposition of [0, 2*pi) into ``n_cells`` equal cells.

    Cell ``i`` covers ``[i*dx, (i+1)*dx)`` and has its center at
    ``(i + 1/2)*dx``.  The domain length is fixed.
    """

    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 4:
            raise ValueError(f"n_cells must be an integer >= 4, got {self.n_cells!r}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def length(self) -> float:
        return LENGTH

    @property
    def dx(self) -> float:
        return LENGTH / self.n_cells

    @cached_property
    def centers(self) -> np.ndarray:
        c = (np.arange(self.n_cells) + 0.5) * self.dx
        c.setflags(write=False)
        return c

    @cached_property
    def faces(self) -> np.ndarray:
        """Right faces x_{i+1/2} = (i+1)*dx, one per cell."""
        f = (np.arange(self.n_cells) + 1.0) * self.dx
        f.setflags(write=False)
        return f

    def field(self, values) -> "Field":
        return Field(self, values)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n_cells))


@dataclass
class Field:
    """Cell averages of a scalar density on a :class:`PeriodicGrid`."""

    grid: PeriodicGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.size != self.grid.n_cells:
            raise GridMismatch(f"expected {self.grid.n_cells} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    def require_nonnegative(self) -> "Field":
        if np.any(self.values < 0):
            raise NegativeDensity(f"min value {self.values.min():.3e} < 0")
        return self

    def rotate(self, shift: int) -> "Field":
        """Cyclic shift by ``shift`` cells (positive moves mass to the right)."""
        return Field(self.grid, np.roll(self.values, shift))

    def _other(self, other):
        if isinstance(other, Field):
            check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)


def check_same_grid(*fields: Field) -> PeriodicGrid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatch(f"grid with {f.grid.n_cells} cells does not match {g.n_cells}")
    return g


def mean(f: Field) -> float:
    return float(np.sum(f.values) * f.grid.dx / LENGTH)


def l1_norm(f: Field) -> float:
    return float(np.sum(np.abs(f.values)) * f.grid.dx)


def linf_norm(f: Field) -> float:
    return float(np.max(np.abs(f.values)))
