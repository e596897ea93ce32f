import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from apass.linkmodel import (NoiseConfig, PowerMatrix, horizon_rate, jain_index, noise_variance,
                             rate_matrix, rate_report, sinr, slot_rate)

pos = st.floats(1e-3, 1e3)


def test_noise_reference():
    # 1.380649e-23 * 290 * 5e6, exact in decimal.
    assert noise_variance(NoiseConfig(290.0, 5e6)) == pytest.approx(2.00194105e-14, rel=1e-15)


def test_noise_linear_in_bandwidth():
    assert noise_variance(NoiseConfig(290.0, 10e6)) == pytest.approx(2 * noise_variance(NoiseConfig(290.0, 5e6)))


def test_noise_zero_temperature():
    assert noise_variance(NoiseConfig(0.0, 5e6)) == 0.0


def test_noise_validation():
    with pytest.raises(ValueError):
        NoiseConfig(290.0, 0.0)


@pytest.mark.parametrize("p, expected", [([1.0, 0.0], 1.0), ([1.0, 1.0], 0.5)])
def test_sinr_examples(p, expected):
    assert sinr(p, 1.0, 0, 1.0) == expected


def test_sinr_interference_limit():
    p = np.array([2.0, 1.0, 3.0])
    assert sinr(1e12 * p, 1.0, 0, 1.0) == pytest.approx(2.0 / 4.0, rel=1e-9)


def test_sinr_requires_noise():
    with pytest.raises(ValueError):
        sinr([1.0], 1.0, 0, 0.0)
    with pytest.raises(ValueError):
        rate_matrix(np.ones((1, 1)), np.ones((1, 1)), 0.0)


@pytest.mark.parametrize("s, r", [(1.0, 1.0), (0.0, 0.0), (3.0, 2.0)])
def test_slot_rate_examples(s, r):
    assert slot_rate([s, 0.0], 1.0, 0, 1.0) == r


@settings(max_examples=100)
@given(p=arrays(float, 4, elements=st.floats(0, 10)), g=pos, k=st.integers(0, 3),
       j=st.integers(0, 3), dp=st.floats(0, 5))
def test_slot_rate_monotone(p, g, k, j, dp):
    base = slot_rate(p, g, k, 1.0)
    up = p.copy()
    up[j] += dp
    if j == k:
        assert slot_rate(up, g, k, 1.0) >= base
    else:
        assert slot_rate(up, g, k, 1.0) <= base


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1))
def test_rate_matrix_matches_scalar(seed):
    rng = np.random.default_rng(seed)
    p, g, s2 = rng.uniform(0, 2, (3, 4)), rng.uniform(0.1, 5, (3, 4)), rng.uniform(0.5, 2, (3, 4))
    R = rate_matrix(p, g, s2)
    for k in range(3):
        for n in range(4):
            assert R[k, n] == pytest.approx(slot_rate(p[:, n], g[k, n], k, s2[k, n]), rel=1e-12)


def test_horizon_rate_single_slot():
    P = PowerMatrix(np.array([[1.0], [2.0]]), 3.0)
    assert horizon_rate(P, [2.0], 0, 1.0) == slot_rate([1.0, 2.0], 2.0, 0, 1.0)


def test_horizon_rate_identical_slots():
    P = PowerMatrix(np.tile([[1.0], [2.0]], (1, 5)), 3.0)
    assert horizon_rate(P, np.full(5, 2.0), 1, 1.0) == pytest.approx(slot_rate([1.0, 2.0], 2.0, 1, 1.0))


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1))
def test_horizon_rate_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    p, g = rng.uniform(0, 1, (3, 6)), rng.uniform(0.1, 5, 6)
    perm = rng.permutation(6)
    a = horizon_rate(PowerMatrix(p, 3.0), g, 0, 1.0)
    b = horizon_rate(PowerMatrix(p[:, perm], 3.0), g[perm], 0, 1.0)
    assert a == pytest.approx(b, rel=1e-12)


def test_horizon_rate_shape_check():
    with pytest.raises(ValueError):
        horizon_rate(PowerMatrix(np.ones((2, 3)), 2.0), np.ones(2), 0, 1.0)


def test_power_matrix_invariants():
    with pytest.raises(ValueError):
        PowerMatrix(np.array([[-1.0]]), 1.0)
    with pytest.raises(ValueError):
        PowerMatrix(np.array([[0.6], [0.6]]), 1.0)
    PowerMatrix(np.array([[0.5], [0.5 + 1e-10]]), 1.0)


def test_jain_examples():
    assert jain_index([2.0, 2.0, 2.0]) == 1.0
    assert jain_index(np.eye(20)[0]) == pytest.approx(1 / 20)
    assert jain_index([1.0, 2.0, 3.0]) == pytest.approx(36 / 42)
    assert jain_index([0.0, 0.0]) == 1.0


@settings(max_examples=100)
@given(r=arrays(float, st.integers(1, 10), elements=st.floats(0, 100)), c=st.floats(1e-3, 1e3))
def test_jain_bounds_and_scaling(r, c):
    j = jain_index(r)
    assert 1 / len(r) - 1e-12 <= j <= 1 + 1e-12
    assert jain_index(c * r) == pytest.approx(j, rel=1e-9)


def test_rate_report():
    g = np.array([[1.0, 4.0], [2.0, 1.0]])
    P = PowerMatrix(np.array([[1.0, 0.5], [1.0, 1.5]]), 2.0)
    rep = rate_report(P, g, 1.0)
    expected = [horizon_rate(P, g[k], k, 1.0) for k in range(2)]
    np.testing.assert_allclose(rep.per_user_rate, expected, rtol=1e-12)
    assert rep.min_rate == min(expected)
    assert rep.fairness == pytest.approx(jain_index(expected))
    assert not rep.degenerate


def test_rate_report_all_zero():
    rep = rate_report(PowerMatrix(np.zeros((3, 2)), 1.0), np.ones((3, 2)), 1.0)
    assert rep.fairness == 1.0 and rep.degenerate


def test_rate_report_shape_mismatch():
    with pytest.raises(ValueError):
        rate_report(PowerMatrix(np.ones((2, 2)), 2.0), np.ones((2, 3)), 1.0)


def test_single_user_full_power_is_best():
    rng = np.random.default_rng(0)
    g = rng.uniform(0.1, 10, (1, 5))
    best = rate_report(PowerMatrix(np.ones((1, 5)), 1.0), g, 1.0).min_rate
    for _ in range(100):
        p = rng.uniform(0, 1, (1, 5))
        assert rate_report(PowerMatrix(p, 1.0), g, 1.0).min_rate <= best
