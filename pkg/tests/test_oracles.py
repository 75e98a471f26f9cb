"""
Frozen reference values computed independently of the package.

The numbers below come from 20-digit mpmath quadrature of the defining
integrals (mollifier, smoothed nonlinearity, noise primitives, Barenblatt
mass) and from scipy's ``ndtri``.  They are frozen here so a regression in
any of the package's own quadratures shows up as a plain number mismatch.
"""

import math

import numpy as np
import pytest

from obstaclespde import mollifier
from obstaclespde.grid import TorusGrid
from obstaclespde.model import ModelSpec, NoiseMode, PowerNonlinearity, SmoothedNonlinearity, make_obstacle
from obstaclespde.sde_driver import normal_quantile
from obstaclespde.solver import SolverConfig, step
from obstaclespde.validation import BarenblattParams, barenblatt

# {{{ mollifier


def test_mollifier_normalization():
    assert mollifier._normalization() == pytest.approx(0.22199690808403971891, rel=1e-13)


def test_mollifier_peak():
    assert float(mollifier.rho(0.5)) == pytest.approx(1.6571376797382103033, rel=1e-13)


def test_mollifier_cdf():
    assert float(mollifier.cdf(0.3)) == pytest.approx(0.18712776568876771004, rel=1e-11)
    assert float(mollifier.cdf(0.5)) == pytest.approx(0.5, abs=1e-13)


# }}}

# {{{ smoothed nonlinearity

SQRT_PHI_N = {
    (2, 4): {0.0: 0.67278654204853601, 0.5: 1.4998585540585959, 1.5: 2.2320235990560615, 3.99: 3.3237797505065518},
    (3, 16): {0.0: 0.15625, 0.5: 0.99102540378443865, 1.5: 2.7230762113533159, 15.99: 27.81315531506943},
}
PHI_N = {
    (2, 4): {0.5: 0.70818475231883974, 1.5: 4.3566871211111399},
    (3, 16): {0.5: 0.18703563306648973, 1.5: 3.8856733349585568},
}


@pytest.mark.parametrize("key", sorted(SQRT_PHI_N))
def test_sqrt_phi_n_direct_quadrature(key):
    m, n = key
    s = SmoothedNonlinearity(PowerNonlinearity(m), n)
    for r, ref in SQRT_PHI_N[key].items():
        assert float(s._exact_sqrt(np.array([r]))[0]) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("key", sorted(SQRT_PHI_N))
def test_sqrt_phi_n_tabulated(key):
    m, n = key
    s = SmoothedNonlinearity(PowerNonlinearity(m), n)
    for r, ref in SQRT_PHI_N[key].items():
        assert float(s.sqrt_phi_prime(r)) == pytest.approx(ref, rel=1e-6)
        assert float(s.sqrt_phi_prime(-r)) == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("key", sorted(PHI_N))
def test_phi_n_primitive(key):
    m, n = key
    s = SmoothedNonlinearity(PowerNonlinearity(m), n)
    for r, ref in PHI_N[key].items():
        assert float(s.phi(r)) == pytest.approx(ref, rel=1e-8)
        assert float(s.phi(-r)) == pytest.approx(-ref, rel=1e-8)


# }}}

# {{{ noise primitives and the normal quantile


def test_s1sq_primitives():
    assert float(NoiseMode(1.0, "sine").s1sq_primitive(1.3)) == pytest.approx(0.77887534295536606, rel=1e-14)
    assert float(NoiseMode(1.0, "tanh").s1sq_primitive(0.7)) == pytest.approx(0.5307839030934284, rel=1e-14)


NDTRI = {
    1e-10: -6.361340902404056,
    0.02425: -1.972961051311885,
    0.3: -0.5244005127080409,
    0.5: 0.0,
    0.975: 1.959963984540054,
    1 - 1e-12: 7.0344869100478356,
}


@pytest.mark.parametrize("p", sorted(NDTRI))
def test_normal_quantile(p):
    assert float(normal_quantile(np.array(p))) == pytest.approx(NDTRI[p], rel=1e-15, abs=1e-15)


# }}}

# {{{ barenblatt


def test_barenblatt_mass_and_radius():
    p = BarenblattParams.from_constant(2.0, 1, 0.1, 1e-3)
    assert p.mass == pytest.approx(0.1460593486680443, rel=1e-13)
    assert p.support_radius(0.0) == pytest.approx(0.10954451150103322, rel=1e-13)


def test_barenblatt_discrete_mass():
    p = BarenblattParams.from_constant(2.0, 1, 0.1, 1e-3)
    grid = TorusGrid(1, 4096)
    for t in (0.0, 0.01, 0.05):
        u = barenblatt(grid.coordinates(), t, p)
        assert grid.cell_volume * u.sum() == pytest.approx(0.1460593486680443, rel=1e-6)


# }}}

# {{{ one explicit step by hand


def test_single_step_by_hand():
    """One deterministic step on N = 5 written out with plain numpy."""
    N, dt, eps = 5, 1e-4, 1e-2
    h = 1.0 / N
    grid = TorusGrid(1, N)
    x = np.arange(N) * h
    u0 = 0.6 + 0.2 * np.cos(2 * math.pi * x)
    obstacle = make_obstacle("constant", {"level": 0.5})
    model = ModelSpec(PowerNonlinearity(2.0), obstacle=obstacle)
    cfg = SolverConfig(grid=grid, T=dt, dt=dt, eps=eps, state_bound=1.0)

    phi = u0 * np.abs(u0)
    lap = (np.roll(phi, -1) - 2 * phi + np.roll(phi, 1)) / h**2
    u_star = u0 + dt * lap
    nu = np.maximum(0.5 - u_star, 0.0) / (eps + dt)
    expect = u_star + dt * nu

    got = step(grid.field(u0), 0.0, [], cfg, model, bound=1.0)
    np.testing.assert_allclose(got.values, expect, rtol=0, atol=1e-15)


# }}}
