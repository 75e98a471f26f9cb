"""
Periodic uniform grids on the unit torus and finite-difference operators.

All array kernels work on the trailing ``dim`` axes, so leading batch axes
(ensemble members, time levels) pass through untouched.  The centered
gradient/divergence pair satisfies exact discrete summation by parts,

    inner(gradient(f), F) + inner(f, divergence(F)) = 0,

and the compact Laplacian is symmetric with respect to :func:`inner`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np


class GridMismatchError(ValueError):
    """Raised when fields from incompatible discretizations are combined."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid with ``points_per_dim`` nodes per axis on [0, 1)^dim."""

    dim: int
    points_per_dim: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.points_per_dim < 3:
            raise ValueError("points_per_dim must be at least 3")

    @property
    def spacing(self) -> float:
        return 1.0 / self.points_per_dim

    @property
    def total_points(self) -> int:
        return self.points_per_dim**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_dim,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array of shape ``self.shape`` per axis."""
        x = np.arange(self.points_per_dim) * self.spacing
        if self.dim == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing="ij"))

    def field(self, values) -> "Field":
        return Field(self, np.asarray(values, dtype=float))

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))

    def constant(self, c: float) -> "Field":
        return Field(self, np.full(self.shape, float(c)))

    def sample(self, fn) -> "Field":
        """Evaluate ``fn(*coords)`` on the nodes."""
        return Field(self, np.broadcast_to(fn(*self.coordinates()), self.shape).astype(float))


@dataclass(frozen=True, eq=False)
class Field:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            if v.size != self.grid.total_points:
                raise GridMismatchError(
                    f"{v.size} values for a grid with {self.grid.total_points} points"
                )
            v = v.reshape(self.grid.shape)
        object.__setattr__(self, "values", v)

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise GridMismatchError(f"grid {self.grid} vs {other.grid}")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return Field(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return Field(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values * other.values)
        return Field(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def mean(self) -> float:
        return float(self.values.mean())

    def shift(self, k: int | Sequence[int]) -> "Field":
        """Periodic index shift: ``out[p] = self[p - k]``."""
        ks = (k,) * self.grid.dim if np.isscalar(k) else tuple(k)
        return Field(self.grid, np.roll(self.values, ks, axis=tuple(range(self.grid.dim))))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: TorusGrid
    components: tuple[Field, ...]

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise GridMismatchError(
                f"{len(self.components)} components on a {self.grid.dim}-d grid"
            )
        for c in self.components:
            if c.grid != self.grid:
                raise GridMismatchError("component grid differs from vector field grid")

    @classmethod
    def from_arrays(cls, grid: TorusGrid, arrays) -> "VectorField":
        return cls(grid, tuple(Field(grid, a) for a in arrays))

    def stack(self) -> np.ndarray:
        return np.stack([c.values for c in self.components])


# {{{ array kernels (spatial axes are the trailing `dim` axes)


def _axis(dim: int, i: int) -> int:
    return -dim + i


@lru_cache(maxsize=None)
def _wrap_index(n: int, offset: int) -> np.ndarray:
    return (np.arange(n) + offset) % n


def shift_array(a: np.ndarray, offset: int, axis: int) -> np.ndarray:
    """``out[p] = a[p + offset]`` along ``axis`` with periodic wrap."""
    return np.take(a, _wrap_index(a.shape[axis], offset), axis=axis)


def laplacian_array(a: np.ndarray, h: float, dim: int) -> np.ndarray:
    out = np.zeros_like(a)
    for i in range(dim):
        ax = _axis(dim, i)
        out += shift_array(a, 1, ax) + shift_array(a, -1, ax) - 2.0 * a
    return out / (h * h)


def centered_diff_array(a: np.ndarray, h: float, dim: int, i: int) -> np.ndarray:
    ax = _axis(dim, i)
    return (shift_array(a, 1, ax) - shift_array(a, -1, ax)) / (2.0 * h)


def forward_diff_array(a: np.ndarray, h: float, dim: int, i: int) -> np.ndarray:
    ax = _axis(dim, i)
    return (shift_array(a, 1, ax) - a) / h


def gradient_array(a: np.ndarray, h: float, dim: int) -> np.ndarray:
    """Centered gradient; component axis is prepended."""
    return np.stack([centered_diff_array(a, h, dim, i) for i in range(dim)])


def divergence_array(F: np.ndarray, h: float, dim: int) -> np.ndarray:
    """Centered divergence of ``F`` whose leading axis holds the ``dim`` components."""
    out = centered_diff_array(F[0], h, dim, 0)
    for i in range(1, dim):
        out = out + centered_diff_array(F[i], h, dim, i)
    return out


def inner_array(f: np.ndarray, g: np.ndarray, h: float, dim: int) -> np.ndarray:
    axes = tuple(range(-dim, 0))
    return (h**dim) * np.sum(f * g, axis=axes)


# }}}


def laplacian(f: Field) -> Field:
    """Compact second-order Laplacian with periodic wrap."""
    g = f.grid
    return Field(g, laplacian_array(f.values, g.spacing, g.dim))


def gradient(f: Field) -> VectorField:
    g = f.grid
    return VectorField.from_arrays(g, gradient_array(f.values, g.spacing, g.dim))


def forward_gradient(f: Field) -> VectorField:
    """One-sided (forward) differences; pairs with :func:`laplacian` by parts."""
    g = f.grid
    return VectorField.from_arrays(
        g, [forward_diff_array(f.values, g.spacing, g.dim, i) for i in range(g.dim)]
    )


def divergence(F: VectorField) -> Field:
    g = F.grid
    return Field(g, divergence_array(F.stack(), g.spacing, g.dim))


def inner(f: Field | VectorField, g: Field | VectorField) -> float:
    """Discrete L2 pairing ``h^d * sum(f * g)``; vector fields pair componentwise."""
    if f.grid != g.grid:
        raise GridMismatchError(f"grid {f.grid} vs {g.grid}")
    if isinstance(f, VectorField) != isinstance(g, VectorField):
        raise TypeError("cannot pair a Field with a VectorField")
    grid = f.grid
    if isinstance(f, VectorField):
        return float(
            sum(inner_array(a.values, b.values, grid.spacing, grid.dim)
                for a, b in zip(f.components, g.components))
        )
    return float(inner_array(f.values, g.values, grid.spacing, grid.dim))


def norm(f: Field | VectorField) -> float:
    return float(np.sqrt(inner(f, f)))
