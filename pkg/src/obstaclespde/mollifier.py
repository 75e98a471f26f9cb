"""Canonical one-sided mollifier ``rho`` with ``supp rho = (0, 1)`` and unit mass."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import integrate

from .quadrature import AntiderivativeTable


def _bump(x):
    x = np.asarray(x, dtype=float)
    s = 2.0 * x - 1.0
    inside = np.abs(s) < 1.0
    out = np.zeros_like(x)
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si * si))
    return out


@lru_cache(maxsize=None)
def _normalization() -> float:
    val, _ = integrate.quad(lambda x: float(_bump(x)), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def rho(x):
    """Smooth density on (0, 1); its maximum is about 1.657 < 2."""
    return _bump(x) / _normalization()


def rho_scaled(r, theta: float):
    """``rho_theta(r) = rho(r / theta) / theta``."""
    return rho(np.asarray(r, dtype=float) / theta) / theta


@lru_cache(maxsize=None)
def _cdf_table() -> AntiderivativeTable:
    return AntiderivativeTable(rho, 0.0, 1.0, tol=1e-13, initial_nodes=257)


@lru_cache(maxsize=None)
def _cdf_integral_table() -> AntiderivativeTable:
    return AntiderivativeTable(lambda x: cdf(x), 0.0, 1.0, tol=1e-13, initial_nodes=257)


def cdf(x):
    """``int_0^x rho``; 0 below 0 and 1 above 1."""
    x = np.asarray(x, dtype=float)
    return np.clip(_cdf_table()(np.clip(x, 0.0, 1.0)), 0.0, 1.0)


def cdf_integral(x):
    """``int_0^x cdf`` for ``x >= 0``; grows like ``x - 1/2`` past 1 (symmetric bump)."""
    x = np.asarray(x, dtype=float)
    tab = _cdf_integral_table()
    # interpolation can dip a few ulps below zero next to the origin
    inside = np.maximum(tab(np.clip(x, 0.0, 1.0)), 0.0)
    return inside + np.maximum(x - 1.0, 0.0)
