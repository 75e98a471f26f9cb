import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obstaclespde.errors import ConfigurationError
from obstaclespde.experiments import ShiftedReaction
from obstaclespde.grid import TorusGrid
from obstaclespde.model import ModelSpec
from obstaclespde.sde_driver import NoisePathSpec
from obstaclespde.solver import (
    SolverConfig,
    compensation_measure,
    refine_epsilon,
    refine_joint,
    solve,
    solve_ensemble,
    step,
)

from builders import build


model_draws = st.fixed_dictionaries(
    {
        "noise": st.sampled_from([0.0, 0.1, 0.3]),
        "obstacle": st.sampled_from([None, 0.3, 0.45]),
        "reaction": st.sampled_from([0.0, 0.5]),
        "eps": st.sampled_from([1e-1, 1e-3]),
        "seed": st.integers(0, 2**32),
    }
)


# {{{ invariants


@settings(max_examples=15)
@given(model_draws)
def test_mass_identity_and_skorohod(draw):
    cfg, model, xi, spec = build(**draw)
    tr = solve(cfg, model, xi, spec)
    assert tr.running["mass_residual_max"] <= 1e-12
    v, sk = tr.running["violation_sq"], abs(tr.running["skorohod"])
    assert sk == pytest.approx(v / cfg.eps, rel=1e-9, abs=1e-300)
    assert np.all(tr.penalty_fields >= 0)
    assert tr.running["contraction_excess_max"] <= 1e-14


@settings(max_examples=10)
@given(model_draws, st.sampled_from([2, 5]))
def test_measure_mass_matches_applied_penalty(draw, stride):
    cfg, model, xi, spec = build(stride=stride, T=0.02, **draw)
    tr = solve(cfg, model, xi, spec)
    nu = compensation_measure(tr)
    assert nu.total_mass == pytest.approx(tr.running["penalty_l1"], rel=1e-12, abs=1e-300)
    assert nu.pair(lambda t, c: np.ones_like(c[0])) == pytest.approx(nu.total_mass, rel=1e-13, abs=1e-300)


def test_recorded_penalty_is_post_update_penalty():
    cfg, model, xi, spec = build(eps=1e-3)
    tr = solve(cfg, model, xi, spec)
    psi = tr.obstacle_values()
    np.testing.assert_allclose(tr.penalty_fields[1:], np.maximum(psi[1:] - tr.states[1:], 0) / cfg.eps, rtol=1e-12, atol=1e-12)


def test_stride_subsamples_states():
    cfg, model, xi, spec = build(stride=1)
    a = solve(cfg, model, xi, spec)
    b = solve(cfg.with_(record_stride=4), model, xi, spec)
    np.testing.assert_array_equal(b.states, a.states[::4])
    np.testing.assert_allclose(b.penalty_fields[1:], a.penalty_fields[1:].reshape(-1, 4, *a.grid.shape).mean(axis=1), rtol=1e-13)


def test_step_matches_solve():
    cfg, model, xi, spec = build()
    tr = solve(cfg, model, xi, spec)
    u1 = step(xi, 0.0, tr.increments[0], cfg, model, bound=tr.running["state_bound"])
    np.testing.assert_array_equal(u1.values, tr.states[1])


def test_determinism_and_batch_invariance():
    cfg, model, xi, spec = build(noise=0.3)
    specs = [spec.member(i) for i in range(5)]
    ics = [xi] * 5
    together = solve_ensemble(cfg, model, ics, specs)
    for i in (0, 3):
        alone = solve(cfg, model, xi, specs[i])
        np.testing.assert_array_equal(alone.states, together[i].states)
    again = solve_ensemble(cfg, model, ics[:3], specs[:3])
    np.testing.assert_array_equal(again[2].states, together[2].states)


def test_two_dimensional_run():
    cfg, model, xi, spec = build(dim=2, N=12, T=0.005)
    tr = solve(cfg, model, xi, spec)
    assert tr.states.shape[1:] == (12, 12)
    assert tr.running["mass_residual_max"] <= 1e-12


def test_zero_horizon():
    cfg, model, xi, spec = build(T=0.0)
    tr = solve(cfg, model, xi, spec)
    assert tr.times.tolist() == [0.0]
    np.testing.assert_array_equal(tr.states[0], xi.values)


# }}}

# {{{ order and stability


@settings(max_examples=8)
@given(model_draws)
def test_eps_monotone(draw):
    draw = dict(draw, obstacle=0.45)
    cfg, model, xi, spec = build(**draw)
    ref = refine_epsilon(cfg, model, xi, spec, [1e-1, 1e-2, 1e-3])
    assert ref.monotone
    assert ref.violations_nonincreasing


@settings(max_examples=8)
@given(model_draws, st.floats(0.0, 0.5))
def test_reaction_order(draw, shift):
    cfg, model, xi, spec = build(**draw)
    up = ModelSpec(model.nonlinearity, ShiftedReaction(model.reaction, shift), model.obstacle, model.noise)
    a = solve(cfg, model, xi, spec)
    b = solve(cfg, up, xi, spec)
    assert np.max(a.states - b.states) <= 1e-10


def test_initial_order_and_l1_contraction():
    cfg, model, xi, spec = build(noise=0.0, reaction=0.0)
    hi = xi + 0.05 * (1 + np.sin(2 * math.pi * xi.grid.coordinates()[0]))
    a = solve(cfg, model, xi, spec)
    b = solve(cfg, model, hi, spec)
    assert np.max(a.states - b.states) <= 1e-12
    hd = xi.grid.cell_volume
    dist = hd * np.sum(np.abs(a.states - b.states), axis=1)
    assert np.all(np.diff(dist) <= 1e-14)


# }}}

# {{{ refinement drivers


def test_refine_joint_orders():
    cfg, model, xi, spec = build(noise=0.0, T=0.004)
    a = refine_joint(cfg, model, xi, spec, [8, 16], [1e-1, 1e-2])
    b = refine_joint(cfg, model, xi, spec, [8, 16], [1e-1, 1e-2], order="eps-then-n")
    assert a.sequence == [(8, 0.1), (16, 0.1), (8, 0.01), (16, 0.01)]
    assert b.sequence == [(8, 0.1), (8, 0.01), (16, 0.1), (16, 0.01)]
    for key in a.trajectories:
        np.testing.assert_array_equal(a.trajectories[key].states, b.trajectories[key].states)
    with pytest.raises(ConfigurationError):
        refine_joint(cfg, model, xi, spec, [16, 8], [1e-1])
    with pytest.raises(ConfigurationError):
        refine_epsilon(cfg, model, xi, spec, [1e-2, 1e-1])


def test_semi_implicit_agrees_with_explicit():
    cfg, model, xi, spec = build(noise=0.0, level=16, T=0.01)
    a = solve(cfg, model, xi, spec)
    b = solve(cfg.with_(scheme="semi-implicit-diffusion"), model, xi, spec)
    assert b.running["mass_residual_max"] <= 1e-12
    assert np.max(np.abs(a.states[-1] - b.states[-1])) < 5e-3


# }}}

# {{{ failure modes


def test_cfl_violation_is_refused():
    cfg, model, xi, spec = build(N=64)
    bad = cfg.with_(dt=cfg.T / 2)
    with pytest.raises(ConfigurationError, match="stability bound"):
        solve(bad, model, xi, spec.with_steps(2, bad.dt))


def test_initial_data_below_obstacle():
    cfg, model, xi, spec = build(obstacle=0.6)
    with pytest.raises(ConfigurationError, match="below the obstacle"):
        solve(cfg, model, xi, spec)


def test_config_validation():
    grid = TorusGrid(1, 8)
    for kw in ({"dt": 0.0}, {"eps": 0.0}, {"T": -1.0}, {"level": 0}, {"cfl_safety": 1.0}, {"scheme": "rk4"}, {"record_stride": 0}):
        args = {"grid": grid, "T": 0.1, "dt": 0.01, "eps": 0.1, **kw}
        with pytest.raises(ConfigurationError):
            SolverConfig(**args)
    with pytest.raises(ConfigurationError, match="not an integer"):
        SolverConfig(grid, 0.1, 0.03, 0.1)
    with pytest.raises(ConfigurationError, match="does not divide"):
        SolverConfig(grid, 0.1, 0.01, 0.1, record_stride=3)


def test_semi_implicit_needs_level():
    cfg, model, xi, spec = build(noise=0.0)
    with pytest.raises(ConfigurationError):
        solve(cfg.with_(scheme="semi-implicit-diffusion"), model, xi, spec)


def test_noise_dimension_mismatch():
    cfg, model, xi, spec = build(noise=0.2)
    with pytest.raises(ConfigurationError):
        solve(cfg, model, xi, NoisePathSpec(0, 1, cfg.steps, cfg.dt))


# }}}
