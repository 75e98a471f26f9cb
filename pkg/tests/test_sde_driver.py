import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from obstaclespde.sde_driver import (
    NoisePathSpec,
    coarsen,
    couple,
    fine_spec,
    load_increments,
    normal_quantile,
    save_increments,
    wiener_increments,
)

specs = st.builds(
    NoisePathSpec,
    seed=st.integers(0, 2**63),
    mode_count=st.integers(1, 4),
    step_count=st.integers(1, 60),
    dt=st.sampled_from([1e-3, 0.01]),
    traj_id=st.integers(0, 1000),
)


@given(specs)
def test_regeneration_is_bitwise(spec):
    np.testing.assert_array_equal(wiener_increments(spec), wiener_increments(spec))


@given(specs, st.data())
def test_any_block_equals_the_slice(spec, data):
    full = wiener_increments(spec)
    a = data.draw(st.integers(0, spec.step_count))
    b = data.draw(st.integers(a, spec.step_count))
    np.testing.assert_array_equal(wiener_increments(spec, a, b), full[a:b])


@given(specs, st.integers(1, 50))
def test_extension_keeps_the_prefix(spec, extra):
    longer = spec.with_steps(spec.step_count + extra)
    np.testing.assert_array_equal(wiener_increments(longer)[: spec.step_count], wiener_increments(spec))


@given(specs)
def test_members_and_seeds_differ(spec):
    base = wiener_increments(spec)
    assert not np.array_equal(base, wiener_increments(spec.member(spec.traj_id + 1)))


@given(specs, st.text(max_size=8))
def test_couple_shares_increments(spec, tag):
    np.testing.assert_array_equal(wiener_increments(couple(spec, tag)), wiener_increments(spec))


def test_tag_changes_only_initial_randomness():
    spec = NoisePathSpec(3, 1, 4, 0.1)
    a = couple(spec, "a").ic_rng().random(4)
    b = couple(spec, "b").ic_rng().random(4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, couple(spec, "a").ic_rng().random(4))


@given(st.floats(1e-12, 0.5))
def test_quantile_symmetry_and_monotone(p):
    upper = 1.0 - p
    p = 1.0 - upper  # both p and 1 - p exactly representable
    q = float(normal_quantile(np.array(p)))
    assert q == pytest.approx(-float(normal_quantile(np.array(upper))), rel=1e-13, abs=1e-15)
    assert float(normal_quantile(np.array(p * 1.01))) >= q


@given(st.floats(1e-300, 1e-12))
def test_quantile_deep_tail_is_finite_and_ordered(p):
    q = float(normal_quantile(np.array(p)))
    assert -38.5 < q < -7.0
    assert float(normal_quantile(np.array(p * 2))) >= q


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, np.nan])
def test_quantile_domain(p):
    with pytest.raises(ValueError):
        normal_quantile(np.array(p))


def test_quantile_against_scipy():
    p = np.linspace(1e-6, 1 - 1e-6, 10001)
    np.testing.assert_allclose(normal_quantile(p), stats.norm.ppf(p), rtol=1e-14, atol=1e-14)


def test_increment_statistics():
    spec = NoisePathSpec(11, 2, 50_000, 0.01)
    dW = wiener_increments(spec)
    z = dW / np.sqrt(spec.dt)
    assert abs(z.mean()) < 5 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 5 * np.sqrt(2 / z.size)
    assert abs(np.corrcoef(z[:, 0], z[:, 1])[0, 1]) < 5 / np.sqrt(len(z))
    assert stats.kstest(z.ravel(), "norm").pvalue > 1e-4


def test_coarsen_preserves_the_path():
    spec = NoisePathSpec(5, 2, 10, 0.1)
    fine = wiener_increments(fine_spec(spec, 4))
    coarse = coarsen(fine, 4)
    assert coarse.shape == (10, 2)
    np.testing.assert_allclose(coarse.sum(axis=0), fine.sum(axis=0), rtol=1e-13)
    with pytest.raises(ValueError):
        coarsen(fine, 3)


def test_zero_modes():
    assert wiener_increments(NoisePathSpec(0, 0, 7, 0.1)).shape == (7, 0)


def test_spec_validation():
    with pytest.raises(ValueError):
        NoisePathSpec(0, 1, 1, 0.0)
    with pytest.raises(ValueError):
        NoisePathSpec(-1, 1, 1, 0.1)
    with pytest.raises(ValueError):
        wiener_increments(NoisePathSpec(0, 1, 5, 0.1), 4, 2)


def test_save_load_roundtrip(tmp_path):
    spec = NoisePathSpec(9, 3, 17, 0.02, traj_id=4)
    dW = wiener_increments(spec)
    save_increments(tmp_path / "w.bin", spec, dW)
    meta, back = load_increments(tmp_path / "w.bin")
    np.testing.assert_array_equal(back, dW)
    assert meta == {"seed": 9, "traj_id": 4, "dt": 0.02}
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(ValueError):
        load_increments(tmp_path / "bad.bin")
