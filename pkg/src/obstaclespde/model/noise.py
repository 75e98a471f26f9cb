"""
Conservative noise coefficients ``sigma^k(x, r)`` with analytic partials.

Every mode is separable,

    sigma^{ik}(x, r) = c_k * e_k[i] * s_k(r) * T_k(x),

with ``s_k`` from a small registry of scalar profiles (derivatives up to third
order) and ``T_k(x) = cos(2 pi w_k . x + phase_k)`` or a constant.  All
partials needed by the Ito form and the entropy inequality are products of
``s`` and ``T`` derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def _linear(r, k):
    r = np.asarray(r, dtype=float)
    if k == 0:
        return r.copy()
    if k == 1:
        return np.ones_like(r)
    return np.zeros_like(r)


def _sine(r, k):
    r = np.asarray(r, dtype=float)
    return (np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x))[k](r)


def _tanh(r, k):
    t = np.tanh(np.asarray(r, dtype=float))
    sech2 = 1.0 - t * t
    if k == 0:
        return t
    if k == 1:
        return sech2
    if k == 2:
        return -2.0 * t * sech2
    return -2.0 * sech2 * (1.0 - 3.0 * t * t)


def _constant(r, k):
    r = np.asarray(r, dtype=float)
    return np.ones_like(r) if k == 0 else np.zeros_like(r)


R_PROFILES = {"linear": _linear, "sine": _sine, "tanh": _tanh, "constant": _constant}


def _s1sq_primitive(name, r):
    """``int_0^r s'(tau)^2 dtau`` in closed form."""
    r = np.asarray(r, dtype=float)
    if name == "linear":
        return r.copy()
    if name == "sine":
        return 0.5 * r + 0.25 * np.sin(2.0 * r)
    if name == "tanh":
        t = np.tanh(r)
        return t - t**3 / 3.0
    return np.zeros_like(r)


X_PROFILES = ("cos", "sin", "const")


@dataclass(frozen=True)
class NoiseMode:
    """One separable mode ``c * e * s(r) * T(x)``."""

    amplitude: float
    r_profile: str = "sine"
    x_profile: str = "const"
    wavenumber: tuple[int, ...] = (1,)
    phase: float = 0.0
    direction: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.r_profile not in R_PROFILES:
            raise ValueError(f"unknown r_profile {self.r_profile!r}; choose from {sorted(R_PROFILES)}")
        if self.x_profile not in X_PROFILES:
            raise ValueError(f"unknown x_profile {self.x_profile!r}; choose from {X_PROFILES}")
        if len(self.wavenumber) != len(self.direction):
            raise ValueError("wavenumber and direction must have the grid dimension")

    @property
    def dim(self) -> int:
        return len(self.direction)

    def s(self, r, k: int = 0):
        """``d^k s / dr^k``."""
        return R_PROFILES[self.r_profile](r, k)

    def s1sq_primitive(self, r):
        """``[[s'^2]](r)``."""
        return _s1sq_primitive(self.r_profile, r)

    def _theta(self, coords):
        th = self.phase - (math.pi / 2 if self.x_profile == "sin" else 0.0)
        for w, x in zip(self.wavenumber, coords):
            th = th + TWO_PI * w * np.asarray(x, dtype=float)
        return th

    def T(self, coords, orders: Sequence[int] | None = None):
        """Mixed partial ``prod_i d^{orders[i]}/dx_i`` of the spatial profile."""
        orders = tuple(orders) if orders is not None else (0,) * self.dim
        total = sum(orders)
        if self.x_profile == "const":
            base = np.ones(np.broadcast(*[np.asarray(c) for c in coords]).shape)
            return base if total == 0 else np.zeros_like(base)
        scale = 1.0
        for w, o in zip(self.wavenumber, orders):
            scale *= (TWO_PI * w) ** o
        return scale * np.cos(self._theta(coords) + total * math.pi / 2)

    def directional(self, coords, order: int = 1):
        """``(e . grad)^order T``."""
        if order == 0:
            return self.T(coords)
        if self.dim == 1:
            return self.direction[0] ** order * self.T(coords, (order,))
        e = self.direction
        if order == 1:
            return e[0] * self.T(coords, (1, 0)) + e[1] * self.T(coords, (0, 1))
        if order == 2:
            return (
                e[0] ** 2 * self.T(coords, (2, 0))
                + 2 * e[0] * e[1] * self.T(coords, (1, 1))
                + e[1] ** 2 * self.T(coords, (0, 2))
            )
        raise ValueError("order must be 0, 1 or 2")

    def sigma(self, i: int, coords, r, dr: int = 0, dx: Sequence[int] | None = None):
        """``d^dr/dr^dr d^dx/dx sigma^{i}(x, r)``."""
        return self.amplitude * self.direction[i] * self.s(r, dr) * self.T(coords, dx)

    def c3_norm_sq(self, r_bound: float) -> float:
        """``||sigma||^2_{C^3}`` over ``T^d x [-r_bound, r_bound]`` (sampled sup of all partials)."""
        r = np.linspace(-r_bound, r_bound, 401)
        s_max = max(float(np.max(np.abs(self.s(r, k)))) for k in range(4))
        if self.x_profile == "const":
            t_max = 1.0
        else:
            w = max(abs(v) for v in self.wavenumber)
            t_max = max(1.0, (TWO_PI * w) ** 3)
        e_max = max(abs(v) for v in self.direction)
        return (abs(self.amplitude) * e_max * s_max * t_max) ** 2


@dataclass(frozen=True)
class NoiseModel:
    modes: tuple[NoiseMode, ...] = field(default_factory=tuple)
    dim: int = 1

    def __post_init__(self):
        for md in self.modes:
            if md.dim != self.dim:
                raise ValueError(f"mode of dimension {md.dim} in a {self.dim}-d noise model")

    @property
    def mode_count(self) -> int:
        return len(self.modes)

    def sigma(self, k: int, i: int, coords, r, dr: int = 0, dx=None):
        return self.modes[k].sigma(i, coords, r, dr, dx)

    def ito_coefficients(self, coords, r):
        """Return ``(a, b)`` with ``a[i, j] = 1/2 sum_k sigma_r^{ik} sigma_r^{jk}``
        and ``b[i] = 1/2 sum_k sigma_r^{ik} sum_j sigma_{x_j}^{jk}``."""
        r = np.asarray(r, dtype=float)
        d = self.dim
        shape = np.broadcast(r, *[np.asarray(c) for c in coords]).shape
        a = np.zeros((d, d) + shape)
        b = np.zeros((d,) + shape)
        for md in self.modes:
            sr = md.s(r, 1)
            T = md.T(coords)
            dT = md.directional(coords, 1)
            c2 = md.amplitude**2
            for i in range(d):
                b[i] += 0.5 * c2 * md.direction[i] * sr * md.s(r, 0) * T * dT
                for j in range(d):
                    a[i, j] += 0.5 * c2 * md.direction[i] * md.direction[j] * sr * sr * T * T
        return a, b

    def c3_budget(self, r_bound: float) -> float:
        return float(sum(md.c3_norm_sq(r_bound) for md in self.modes))
