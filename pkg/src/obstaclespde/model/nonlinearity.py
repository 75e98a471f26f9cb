"""
Diffusion nonlinearities ``Phi`` and their smoothed, non-degenerate versions.

:class:`PowerNonlinearity` is the porous-medium choice ``Phi(r) = |r|^(m-1) r``.
:class:`SmoothedNonlinearity` builds ``Phi_n`` from

    sqrt(Phi_n')(r) = 2/n + (kappa_theta * g)(r),  g = sqrt(Phi') o clamp(., -n, n),

where ``kappa_theta(s) = rho_theta(|s|) / 2`` is the symmetrized canonical
mollifier.  The width ``theta`` is chosen from the modulus of continuity of
``sqrt(Phi')`` on ``[-n, n]`` so that mollification moves it by at most
``1/n``; together with the ``2/n`` floor this leaves ``sup_{|r|<=n}
|sqrt(Phi') - sqrt(Phi_n')| <= 3/n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .. import mollifier
from ..quadrature import AntiderivativeTable, bracket

# the kernel vanishes to infinite order at 0 and +-theta; 64 nodes per piece
# integrate it to ~1e-12
_MGX, _MGW = np.polynomial.legendre.leggauss(64)


class Nonlinearity:
    """Interface shared by every ``Phi`` used by the solver and diagnostics."""

    m: float
    K: float

    def phi(self, r):
        raise NotImplementedError

    def phi_prime(self, r):
        raise NotImplementedError

    def sqrt_phi_prime(self, r):
        return np.sqrt(self.phi_prime(r))

    def bracket_sqrt(self, r):
        """``[[sqrt(Phi')]](r)``."""
        r = np.asarray(r, dtype=float)
        return bracket(self.sqrt_phi_prime, r)

    def max_phi_prime(self, bound: float) -> float:
        """``max_{|r| <= bound} Phi'(r)`` (sampled)."""
        r = np.linspace(-bound, bound, 4001)
        return float(np.max(self.phi_prime(r)))


@dataclass(frozen=True)
class PowerNonlinearity(Nonlinearity):
    """``Phi(r) = |r|^(m-1) r``; oddness is structural."""

    m: float
    K: float = 3.0
    kappa: float = 1.0

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError("exponent m must exceed 1")
        if self.K < 1:
            raise ValueError("structure constant K must be >= 1")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")

    @property
    def alpha(self) -> float:
        return 0.5 * (self.m - 1.0)

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        return np.copysign(np.abs(r) ** self.m, r)

    def phi_prime(self, r):
        return self.m * np.abs(np.asarray(r, dtype=float)) ** (self.m - 1.0)

    def sqrt_phi_prime(self, r):
        return math.sqrt(self.m) * np.abs(np.asarray(r, dtype=float)) ** self.alpha

    def sqrt_phi_prime_derivative(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            mag = math.sqrt(self.m) * self.alpha * np.abs(r) ** (self.alpha - 1.0)
        return np.sign(r) * mag

    def bracket_sqrt(self, r):
        r = np.asarray(r, dtype=float)
        a1 = self.alpha + 1.0
        return np.copysign(math.sqrt(self.m) * np.abs(r) ** a1 / a1, r)

    def max_phi_prime(self, bound: float) -> float:
        return float(self.phi_prime(bound))


@dataclass(frozen=True)
class GenericNonlinearity(Nonlinearity):
    """User-supplied ``Phi``/``Phi'`` pair; used to exercise assumption checks."""

    phi_fn: Callable
    phi_prime_fn: Callable
    m: float = 2.0
    K: float = 3.0

    def phi(self, r):
        return np.asarray(self.phi_fn(np.asarray(r, dtype=float)), dtype=float)

    def phi_prime(self, r):
        return np.asarray(self.phi_prime_fn(np.asarray(r, dtype=float)), dtype=float)

    def sqrt_phi_prime(self, r):
        return np.sqrt(np.maximum(self.phi_prime(r), 0.0))


def mollifier_width(base: PowerNonlinearity, n: int) -> float:
    """Width ``theta <= 1/n`` whose modulus of ``sqrt(Phi')`` on ``[-n-1, n+1]`` is ``<= 1/n``."""
    alpha = base.alpha
    c = math.sqrt(base.m)
    if alpha <= 1.0:
        # | |a|^alpha - |b|^alpha | <= |a - b|^alpha
        theta = (1.0 / (n * c)) ** (1.0 / alpha)
    else:
        theta = 1.0 / (n * c * alpha * (n + 1.0) ** (alpha - 1.0))
    return max(min(theta, 1.0 / n), 1e-14)


@dataclass(frozen=True, eq=False)
class SmoothedNonlinearity(Nonlinearity):
    """Smooth, strictly increasing, odd ``Phi_n`` with ``sqrt(Phi_n') >= 2/n``."""

    base: PowerNonlinearity
    n: int
    theta: float = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("smoothing level n must be >= 1")
        object.__setattr__(self, "theta", mollifier_width(self.base, self.n))

    @property
    def m(self) -> float:
        return self.base.m

    @property
    def K(self) -> float:
        return self.base.K

    @property
    def floor(self) -> float:
        return 2.0 / self.n

    @property
    def table_end(self) -> float:
        return self.n + self.theta

    def mollified(self, r) -> np.ndarray:
        """``(kappa_theta * g)(r)`` by Gauss quadrature split at 0 and at the kinks of ``g``."""
        r = np.abs(np.asarray(r, dtype=float))
        shape = r.shape
        r = r.ravel()
        th = self.theta
        n = float(self.n)
        cuts = np.sort(
            np.stack(
                [
                    np.full_like(r, -th),
                    np.zeros_like(r),
                    np.clip(r, -th, th),
                    np.clip(r - n, -th, th),
                    np.full_like(r, th),
                ],
                axis=1,
            ),
            axis=1,
        )
        out = np.zeros_like(r)
        for k in range(cuts.shape[1] - 1):
            a, b = cuts[:, k], cuts[:, k + 1]
            half = 0.5 * (b - a)
            s = 0.5 * (a + b)[:, None] + half[:, None] * _MGX[None, :]
            kern = 0.5 * mollifier.rho_scaled(np.abs(s), th)
            vals = self.base.sqrt_phi_prime(np.clip(r[:, None] - s, -n, n))
            out += half * ((kern * vals) @ _MGW)
        return out.reshape(shape)

    def _exact_sqrt(self, r):
        # both tables evaluate the same two point sets (Gauss points, then
        # nodes), so the second build is served from this two-entry cache
        r = np.asarray(r, dtype=float)
        key = (r.shape, r.tobytes())
        memo = self.__dict__.setdefault("_memo", {})
        if key not in memo:
            if len(memo) >= 2:
                memo.pop(next(iter(memo)))
            memo[key] = self.floor + self.mollified(r)
        return memo[key]

    def table_nodes(self) -> np.ndarray:
        """Nodes on ``[0, n + theta]``: uniform near 0 and the clamp, geometric between."""
        th, n = self.theta, float(self.n)
        parts = [
            np.linspace(0.0, 2.0 * th, 129),
            np.geomspace(2.0 * th, self.table_end, int(np.log(self.table_end / (2.0 * th)) / 2e-3) + 2),
            np.linspace(max(n - 2.0 * th, 0.0), self.table_end, 97),
        ]
        return np.unique(np.concatenate(parts))

    @cached_property
    def _sqrt_table(self) -> AntiderivativeTable:
        return AntiderivativeTable(
            self._exact_sqrt, 0.0, self.table_end, fixed_nodes=self.table_nodes()
        )

    @cached_property
    def _phi_table(self) -> AntiderivativeTable:
        tab = AntiderivativeTable(
            lambda r: self._exact_sqrt(r) ** 2,
            0.0,
            self.table_end,
            fixed_nodes=self._sqrt_table.nodes,
        )
        _check_hermite_monotone(tab)
        return tab

    def sqrt_phi_prime(self, r):
        tab = self._sqrt_table
        moll = np.maximum(tab.integrand(np.abs(np.asarray(r, dtype=float))) - self.floor, 0.0)
        return self.floor + moll

    def phi_prime(self, r):
        return self.sqrt_phi_prime(r) ** 2

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        return np.copysign(self._phi_table(np.abs(r)), r)

    def bracket_sqrt(self, r):
        r = np.asarray(r, dtype=float)
        return np.copysign(self._sqrt_table(np.abs(r)), r)

    def max_phi_prime(self, bound: float) -> float:
        tab = self._sqrt_table
        sel = tab.nodes <= bound
        vals = tab.values_h[sel]
        edge = self.sqrt_phi_prime(min(bound, self.table_end))
        return float(max(np.max(vals) if vals.size else 0.0, edge) ** 2)


def _check_hermite_monotone(tab: AntiderivativeTable):
    """Fritsch--Carlson sufficient condition for a monotone cubic Hermite interpolant."""
    dF = np.diff(tab.values_F)
    dx = np.diff(tab.nodes)
    if np.any(dF <= 0):
        raise ArithmeticError("tabulated Phi_n is not strictly increasing")
    secant = dF / dx
    a = tab.values_h[:-1] / secant
    b = tab.values_h[1:] / secant
    if np.any(a * a + b * b > 9.0):
        raise ArithmeticError("Hermite interpolant of Phi_n may lose monotonicity")
