import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from apass import schemes
from apass.channel import ChannelRealization
from apass.config import HARNESS_SOLVER
from apass.linkmodel import rate_report, sinr
from apass.maxmin_gp import GpSolverError, SolverConfig, sca_maxmin
from apass.schemes import (ApassState, PredictionModel, SchemeError, apass_step, horizon_weights,
                           predict_gains, run_apass, run_equal_power, run_sts, run_water_filling,
                           water_fill)

from conftest import desk_instance, random_gains

PERFECT = PredictionModel(0.0)


def _realization(g, seed=0):
    rng = np.random.default_rng(seed)
    h = np.sqrt(g) * np.exp(1j * rng.uniform(0, 2 * np.pi, g.shape))
    return ChannelRealization(h, np.abs(h) ** 2, np.ones(g.shape, bool), np.full(g.shape, 45.0))


def _random_realization(seed, K=3, N=5):
    return _realization(random_gains(np.random.default_rng(seed), K, N, snr_db=(5, 25)), seed)


# -- predictions ------------------------------------------------------------------

def test_perfect_prediction_exact():
    real = _random_realization(0)
    g = predict_gains(real.h, 1, PERFECT, None)
    np.testing.assert_array_equal(g, real.g[:, 2:])


def test_prediction_error_variance():
    N = 1_000_001
    h = np.ones((1, N), dtype=complex)
    model = PredictionModel(0.25)
    g = predict_gains(h, 0, model, [np.random.default_rng(9)])
    # E|h + d|^2 = |h|^2 + E|d|^2 and the mean gain is 1 here.
    assert np.mean(g - 1.0) == pytest.approx(0.25, rel=0.02)


def test_prediction_error_scales_per_user():
    h = np.vstack([np.ones(200_001), 10 * np.ones(200_001)]).astype(complex)
    rngs = [np.random.default_rng(1), np.random.default_rng(2)]
    g = predict_gains(h, 0, PredictionModel(0.1), rngs)
    assert np.mean(g[0] - 1) == pytest.approx(0.1, rel=0.05)
    assert np.mean(g[1] - 100) == pytest.approx(10.0, rel=0.05)


def test_predictions_redrawn_each_step():
    real = _random_realization(1)
    model = PredictionModel(0.1, rng_seed=3)
    a = predict_gains(real.h, 0, model, schemes._prediction_rngs(model, 0, 0, 3))[:, 1:]
    b = predict_gains(real.h, 1, model, schemes._prediction_rngs(model, 0, 1, 3))
    assert not np.array_equal(a, b)
    again = predict_gains(real.h, 1, model, schemes._prediction_rngs(model, 0, 1, 3))
    np.testing.assert_array_equal(b, again)


def test_prediction_needs_future():
    with pytest.raises(ValueError):
        predict_gains(np.ones((2, 3)), 2, PERFECT, None)


def test_prediction_model_validation():
    with pytest.raises(ValueError):
        PredictionModel(-0.1)


# -- weights and state ------------------------------------------------------------

def test_uniform_weights():
    past, ahead = horizon_weights(10, 3, 10, True)
    np.testing.assert_array_equal(past, np.full(3, 0.1))
    np.testing.assert_array_equal(ahead, np.full(7, 0.1))


def test_split_weights():
    past, ahead = horizon_weights(10, 3, 10, False)
    np.testing.assert_allclose(past, 1 / 4)
    assert ahead[0] == 1 / 4
    np.testing.assert_allclose(ahead[1:], 1 / 6)


def test_split_weights_last_slot():
    past, ahead = horizon_weights(5, 4, 5, False)
    np.testing.assert_allclose(past, 1 / 5)
    np.testing.assert_array_equal(ahead, [1 / 5])


@pytest.mark.parametrize("committed, observed, n", [
    (np.zeros((2, 1)), np.ones((2, 1)), 1),
    (np.zeros((2, 0)), np.ones((2, 1)), 3),
    (np.zeros((2, 1)), np.ones((2, 3)), 1),
])
def test_state_shape_contract(committed, observed, n):
    with pytest.raises(ValueError):
        ApassState(committed, observed, n, 3)


# -- APASS --------------------------------------------------------------------------

def test_first_step_is_genie_program():
    real = _random_realization(2)
    step = apass_step(ApassState(np.zeros((3, 0)), real.g[:, :1], 0, 5), real.g[:, 1:], 1.0, 1.0)
    genie = sca_maxmin(real.g, 1.0, 1.0)
    np.testing.assert_array_equal(step.power.p, genie.power.p)


def test_last_step_is_single_slot_maxmin():
    real = _random_realization(3)
    committed = np.full((3, 4), 1 / 3)
    state = ApassState(committed, real.g, 4, 5)
    step = apass_step(state, np.zeros((3, 0)), 1.0, 1.0)
    # Past slots carry weight 1/N each.
    fixed = schemes.rate_matrix(committed, real.g[:, :4], 1.0).sum(axis=1) / 5
    ref = sca_maxmin(real.g[:, 4:], 1.0, 1.0, [0.2], fixed_rate=fixed, horizon=5)
    np.testing.assert_allclose(step.power.p, ref.power.p, rtol=1e-12)
    assert step.power.shape == (3, 1)


def test_step_rejects_overlong_predictions():
    real = _random_realization(3)
    with pytest.raises(ValueError):
        apass_step(ApassState(np.zeros((3, 4)), real.g, 4, 5), np.ones((3, 1)), 1.0, 1.0)


def _recording(monkeypatch):
    calls = []
    original = schemes.apass_step

    def wrapped(state, predictions, *args, **kwargs):
        res = original(state, predictions, *args, **kwargs)
        calls.append((state, np.asarray(predictions).shape, res.power.p[:, 0].copy()))
        return res

    monkeypatch.setattr(schemes, "apass_step", wrapped)
    return calls


def test_commits_immutable_and_causal(monkeypatch):
    real = _random_realization(4)
    calls = _recording(monkeypatch)
    res = run_apass(real, PredictionModel(0.1, 5), 1.0, 1.0)
    assert len(calls) == 5
    for n, (state, pred_shape, p0) in enumerate(calls):
        assert state.slot_index == n
        assert state.observed_g.shape == (3, n + 1)
        np.testing.assert_array_equal(state.observed_g, real.g[:, :n + 1])
        np.testing.assert_array_equal(state.committed, res.power.p[:, :n])
        np.testing.assert_array_equal(res.power.p[:, n], p0)
        assert pred_shape == (3, 5 - n - 1)


def test_apass_matches_genie_with_perfect_prediction():
    real = _random_realization(5)
    genie = sca_maxmin(real.g, 1.0, 1.0, cfg=HARNESS_SOLVER)
    res = run_apass(real, PERFECT, 1.0, 1.0, HARNESS_SOLVER)
    assert res.report.min_rate == pytest.approx(genie.min_rate, rel=1e-3)


@pytest.mark.parametrize("seed", range(3))
def test_intermediate_objective_nondecreasing(seed):
    res = run_apass(_random_realization(seed), PERFECT, 1.0, 1.0, HARNESS_SOLVER)
    obj = np.array(res.solve_stats["step_objective"])
    assert np.all(np.diff(obj) >= -1e-6 * np.abs(obj[:-1]))


def test_large_prediction_error_still_feasible():
    real = _random_realization(6)
    res = run_apass(real, PredictionModel(10.0, 1), 1.0, 1.0)
    assert res.report.min_rate >= 0
    assert np.all(res.power.p.sum(axis=0) <= 1.0 * (1 + 1e-9))


def test_reports_use_actual_gains():
    real = _random_realization(7)
    for res in (run_apass(real, PredictionModel(0.25), 1.0, 1.0), run_sts(real, PredictionModel(0.25), 1.0, 1.0),
                run_equal_power(real, 1.0, 1.0), run_water_filling(real, 1.0, 1.0)):
        ref = rate_report(res.power, real.g, 1.0)
        np.testing.assert_array_equal(res.report.per_user_rate, ref.per_user_rate)


def test_solver_failure_carries_slot(monkeypatch):
    def boom(*args, **kwargs):
        raise GpSolverError("stalled")

    monkeypatch.setattr(schemes, "sca_maxmin", boom)
    with pytest.raises(SchemeError) as info:
        run_apass(_random_realization(0), PERFECT, 1.0, 1.0)
    assert info.value.slot == 0


def test_timing_stats():
    res = run_apass(_random_realization(0, N=3), PERFECT, 1.0, 1.0, timing=True)
    assert len(res.solve_stats["wall_s"]) == 3
    assert len(res.solve_stats["sca_iterations"]) == 3


# -- STS ----------------------------------------------------------------------------

def test_sts_two_slots_equals_apass():
    # The runs differ only in the warm start of the second step, so converge tightly.
    tight = SolverConfig(epsilon=1e-9, max_sca_iters=5000)
    real = _random_realization(8, N=2)
    a = run_apass(real, PERFECT, 1.0, 1.0, tight)
    s = run_sts(real, PERFECT, 1.0, 1.0, tight)
    assert s.report.min_rate == pytest.approx(a.report.min_rate, rel=1e-6)


def test_sts_horizon_is_two_slots(monkeypatch):
    shapes = []
    original = schemes.sca_maxmin

    def spy(g, *args, **kwargs):
        shapes.append(np.shape(g))
        return original(g, *args, **kwargs)

    monkeypatch.setattr(schemes, "sca_maxmin", spy)
    run_sts(_random_realization(9, N=6), PERFECT, 1.0, 1.0)
    assert shapes == [(3, 2)] * 5 + [(3, 1)]


@pytest.mark.parametrize("seed", range(3))
def test_apass_dominates_sts_with_perfect_prediction(seed):
    real, sigma2, p_total = desk_instance(3, 5, seed)
    a = run_apass(real, PERFECT, p_total, sigma2, HARNESS_SOLVER)
    s = run_sts(real, PERFECT, p_total, sigma2, HARNESS_SOLVER)
    assert a.report.min_rate >= s.report.min_rate - 1e-3


def test_single_user_full_power_everywhere():
    real = _random_realization(10, K=1, N=4)
    for res in (run_apass(real, PERFECT, 2.0, 1.0), run_sts(real, PERFECT, 2.0, 1.0),
                run_equal_power(real, 2.0, 1.0), run_water_filling(real, 2.0, 1.0)):
        np.testing.assert_allclose(res.power.p, 2.0, rtol=1e-6)


# -- equal power and water-filling ---------------------------------------------------

def test_equal_power():
    real = _random_realization(11, K=20, N=3)
    res = run_equal_power(real, 5e6, 1.0)
    np.testing.assert_array_equal(res.power.p, 5e6 / 20)
    g = real.g[4, 1]
    assert sinr(res.power.p[:, 1], g, 4, 1.0) == pytest.approx(g * 5e6 / 20 / (g * 5e6 * 19 / 20 + 1.0))


def test_equal_power_identical_users_fair():
    g = np.tile(random_gains(np.random.default_rng(0), 1, 4), (5, 1))
    assert run_equal_power(_realization(g), 1.0, 1.0).report.fairness == pytest.approx(1.0)


def test_water_fill_examples():
    assert water_fill([0.3], 2.0) == pytest.approx([2.0])
    np.testing.assert_allclose(water_fill([0.5, 0.5], 2.0), [1.0, 1.0])
    p = water_fill([1e-6, 10.0], 1.0)
    assert p[1] == 0.0 and p[0] == pytest.approx(1.0)


@settings(max_examples=200)
@given(inv=arrays(float, st.integers(1, 8), elements=st.floats(1e-4, 1e2)), budget=st.floats(1e-2, 1e2))
def test_water_fill_properties(inv, budget):
    p = water_fill(inv, budget)
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(budget, rel=1e-9)
    active = p > 0
    level = p[active] + inv[active]
    np.testing.assert_allclose(level, level.mean(), rtol=1e-8, atol=1e-8 * budget)
    assert np.all(inv[~active] >= level.mean() * (1 - 1e-8))


def test_water_filling_per_slot():
    real = _random_realization(12, K=4, N=3)
    res = run_water_filling(real, 1.0, 0.5)
    for n in range(3):
        np.testing.assert_array_equal(res.power.p[:, n], water_fill(0.5 / real.g[:, n], 1.0))
