import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from obstaclespde.diagnostics import (
    BumpProfile,
    DiagnosticsReport,
    EntropyTestPack,
    PlaneWaveProfile,
    SumProfile,
    TimeCutoff,
    apriori_monitor,
    calibrated_entropy_check,
    ensemble_summary,
    entropy_ladder,
    entropy_residual,
    initial_attainment,
    l1_stability,
    skorohod_defect,
    violation_sq,
)
from obstaclespde.errors import ConfigurationError
from obstaclespde.solver import compensation_measure, solve

from builders import build


@pytest.fixture(scope="module")
def run():
    cfg, model, xi, spec = build(noise=0.0, eps=1e-3, T=0.02, obstacle=0.45)
    tr = solve(cfg, model, xi, spec)
    return tr, compensation_measure(tr)


@pytest.fixture(scope="module")
def noisy():
    cfg, model, xi, spec = build(noise=0.3, eps=1e-2, T=0.02, obstacle=0.45, stride=5, seed=7)
    tr = solve(cfg, model, xi, spec)
    return tr, compensation_measure(tr)


def _fd(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


# {{{ test functions and entropies


def test_time_cutoff():
    tc = TimeCutoff.for_horizon(1.0)
    assert tc(0.3) == 1.0 and tc(0.95) == 0.0
    t = np.linspace(0.45, 0.95, 11)
    np.testing.assert_allclose(tc.derivative(t), _fd(tc, t), atol=1e-6)
    with pytest.raises(ValueError):
        TimeCutoff(0.5, 0.5)


@pytest.mark.parametrize(
    "prof",
    [
        PlaneWaveProfile(0.5, (1, 2), 0.3),
        BumpProfile((0.3, 0.6), 0.25),
        SumProfile((PlaneWaveProfile(0.2, (1, 0)), BumpProfile((0.5, 0.5), 0.3))),
    ],
)
def test_profile_derivatives(prof, rng):
    x = rng.uniform(0, 1, (2, 40))
    h = 1e-5
    grad = prof.gradient(tuple(x))
    hess = prof.hessian(tuple(x))
    for i in range(2):
        e = np.zeros((2, 1))
        e[i] = h
        fd = (prof.values(tuple(x + e)) - prof.values(tuple(x - e))) / (2 * h)
        np.testing.assert_allclose(grad[i], fd, atol=1e-5)
        fdg = (prof.gradient(tuple(x + e)) - prof.gradient(tuple(x - e))) / (2 * h)
        np.testing.assert_allclose(hess[:, i], fdg, atol=1e-3)


@given(st.floats(0.01, 1.0), st.floats(-1, 1), st.floats(-3, 3))
def test_delta_entropy_shape(delta, center, r):
    pack = EntropyTestPack(TimeCutoff(0.0, 1.0), delta=delta, center=center)
    assert float(pack.eta(center)) == 0.0
    assert float(pack.eta(r)) >= 0.0
    assert float(pack.eta_second(r)) >= 0.0
    assert abs(float(pack.eta_prime(r))) <= 1.0
    if abs(r - center) > delta:
        assert float(pack.eta_second(r)) == 0.0
        assert abs(float(pack.eta_prime(r))) == pytest.approx(1.0, abs=1e-12)


def test_delta_entropy_derivatives():
    pack = EntropyTestPack(TimeCutoff(0.0, 1.0), delta=0.2, center=0.1)
    r = np.linspace(-0.3, 0.5, 41)
    np.testing.assert_allclose(pack.eta_prime(r), _fd(pack.eta, r), atol=1e-7)
    np.testing.assert_allclose(pack.eta_second(r), _fd(pack.eta_prime, r), atol=1e-5)


def test_pack_validation():
    tc = TimeCutoff(0.0, 1.0)
    with pytest.raises(ValueError):
        EntropyTestPack(tc, delta=0.0)
    with pytest.raises(ValueError):
        EntropyTestPack(tc, kind="quadratic")
    with pytest.raises(ValueError):
        EntropyTestPack.linear(tc, sign=2.0)
    with pytest.raises(ValueError):
        EntropyTestPack(tc, scale=-1.0)


def test_bracket_for_linear_integrand():
    pack = EntropyTestPack(TimeCutoff(0.0, 1.0), delta=0.3, center=0.2)
    u = np.linspace(-1, 1, 21)
    # G(r) = r: [[G' eta']](u) = u eta'(u) - int_0^u s eta''(s) ds = eta(u) - eta(0)
    np.testing.assert_allclose(pack.bracket(lambda s: s, u), pack.eta(u) - pack.eta(0.0), atol=1e-11)


# }}}

# {{{ residuals


def test_linear_residuals_cancel(run, noisy):
    for tr, nu in (run, noisy):
        tc = TimeCutoff.for_horizon(tr.config.T)
        rp = entropy_residual(tr, nu, EntropyTestPack.linear(tc, sign=1.0))
        rm = entropy_residual(tr, nu, EntropyTestPack.linear(tc, sign=-1.0))
        assert rp + rm == pytest.approx(0.0, abs=1e-12 * (1 + abs(rp)))


def test_residual_is_linear_in_scale(run):
    tr, nu = run
    pack = EntropyTestPack(TimeCutoff.for_horizon(tr.config.T), delta=0.1, center=0.5)
    assert entropy_residual(tr, nu, pack.scaled(3.0)) == pytest.approx(3 * entropy_residual(tr, nu, pack), rel=1e-10)


@pytest.mark.parametrize("delta", [1.0, 0.1])
def test_convex_entropy_inequality_deterministic(run, delta):
    tr, nu = run
    pack = EntropyTestPack(TimeCutoff.for_horizon(tr.config.T), delta=delta, center=0.5)
    chk = calibrated_entropy_check(tr, nu, pack)
    assert chk.passed, chk


def test_ladder_halves_equality_residual():
    cfg, model, xi, spec = build(noise=0.0, eps=1e-2, T=0.01, N=12)
    ic = lambda c: 0.6 + 0.15 * np.cos(2 * math.pi * c[0])
    lad = entropy_ladder(cfg, model, ic, spec, levels=3)
    assert lad.points == [12, 17, 24]
    assert all(r > 1.5 for r in lad.ratios), lad
    with pytest.raises(ConfigurationError):
        entropy_ladder(cfg, model, ic, spec, levels=1)


def test_mismatched_measure_rejected(run, noisy):
    with pytest.raises(ConfigurationError):
        skorohod_defect(run[0], noisy[1])


def test_skorohod_and_violation_match_running_totals(run):
    tr, nu = run
    assert skorohod_defect(tr, nu) == pytest.approx(abs(tr.running["skorohod"]), rel=1e-10)
    assert violation_sq(tr) == pytest.approx(tr.running["violation_sq"], rel=1e-10)
    assert skorohod_defect(tr, nu) == pytest.approx(violation_sq(tr) / tr.config.eps, rel=1e-9)


def test_apriori_monitor(run, noisy):
    for tr, _ in (run, noisy):
        rep = apriori_monitor(tr)
        assert all(e["value"] >= 0 for e in rep.entries)
        assert rep["penalty_l1"] == tr.running["penalty_l1"]


# }}}

# {{{ stability and attainment


def test_l1_stability():
    cfg, model, xi, spec = build(noise=0.2, eps=1e-2, T=0.01)
    hi = xi + 0.05
    a = [solve(cfg, model, xi, spec.member(i)) for i in range(3)]
    b = [solve(cfg, model, hi, spec.member(i)) for i in range(3)]
    st_ = l1_stability(a, b)
    assert st_.initial_distance == pytest.approx(0.05)
    assert st_.ratio <= 1.0 + 1e-12
    assert l1_stability(a[0], a[0]).ratio == 0.0
    with pytest.raises(ConfigurationError):
        l1_stability(a[:2], b[1:])
    with pytest.raises(ConfigurationError):
        l1_stability(a, b[:2])


def test_initial_attainment_by_hand(run):
    tr, _ = run
    xi = tr.xi
    hd = tr.grid.cell_volume
    sq = hd * np.sum((tr.states - xi) ** 2, axis=1)
    tau = 4 * tr.record_dt
    (got,) = initial_attainment(tr, xi, [tau])
    assert got == pytest.approx(tr.record_dt * sq[:4].sum() / tau, rel=1e-14)
    A = initial_attainment(tr, xi, [tr.record_dt * k for k in (1, 4, 16)])
    assert A[0] == 0.0 and A[0] <= A[1] <= A[2]
    with pytest.raises(ConfigurationError):
        initial_attainment(tr, xi, [0.5 * tr.record_dt])
    with pytest.raises(ConfigurationError):
        initial_attainment(tr, xi, [2 * tr.config.T])


def test_ensemble_summary():
    assert ensemble_summary([1.0, 3.0]) == (2.0, 1.0)
    assert ensemble_summary([4.0]) == (4.0, 0.0)


# }}}

# {{{ report


def test_report_serialization():
    rep = DiagnosticsReport(metadata={"kind": "demo"})
    rep.add("a", 1.5, 2.0, True).add("b", -0.25, 0.0, False).add("c", 3.0)
    assert not rep.passed
    assert [e["name"] for e in rep.failures()] == ["b"]
    assert json.loads(rep.to_json())["entries"][1]["value"] == -0.25
    lines = rep.to_csv().splitlines()
    assert lines[0] == "name,value,tolerance,passed"
    assert lines[2] == "b,-0.25,0.0,false"
    assert lines[3] == "c,3.0,,"
    with pytest.raises(ValueError):
        rep.add("bad", math.nan)
    with pytest.raises(KeyError):
        rep["missing"]


# }}}
