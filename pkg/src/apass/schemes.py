"""Transmission schemes evaluated on a shared channel realization.

APASS re-solves the max-min problem over the rest of the pass at every slot,
using the actual gain of the current slot and predicted gains for the future,
and commits only the current slot. STS does the same with a one-slot
look-ahead. Equal power and per-slot water-filling are channel-unaware of
the horizon.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .linkmodel import PowerMatrix, RateReport, rate_matrix, rate_report
from .maxmin_gp import GpSolverError, SolverConfig, sca_maxmin

SCHEMES = ("apass", "sts", "equal_power", "water_filling")


class SchemeError(RuntimeError):
    """A scheme step failed; ``slot`` is the 0-based slot being allocated."""

    def __init__(self, message, slot=None):
        super().__init__(message)
        self.slot = slot


@dataclass(frozen=True)
class PredictionModel:
    """Gaussian prediction-error surrogate.

    error_variance_normalized
        Error variance as a fraction of each user's mean channel power gain.
    uniform_horizon_weights
        Weight every slot by 1/N. Otherwise past and current slots share 1/n
        and future slots share 1/(N - n) at step n (1-based).
    """

    error_variance_normalized: float = 0.0
    rng_seed: int = 0
    uniform_horizon_weights: bool = True

    def __post_init__(self):
        if not self.error_variance_normalized >= 0:
            raise ValueError("prediction error variance must be >= 0")


@dataclass(frozen=True)
class ApassState:
    """What the transmitter knows at the start of slot ``slot_index`` (0-based).

    ``committed`` holds the powers of slots ``0 .. slot_index - 1`` and
    ``observed_g`` the actual gains of slots ``0 .. slot_index``.
    """

    committed: np.ndarray
    observed_g: np.ndarray
    slot_index: int
    n_slots: int

    def __post_init__(self):
        K = self.observed_g.shape[0]
        if not 0 <= self.slot_index < self.n_slots:
            raise ValueError(f"slot index {self.slot_index} outside [0, {self.n_slots})")
        if self.committed.shape != (K, self.slot_index):
            raise ValueError("committed powers must cover exactly the past slots")
        if self.observed_g.shape != (K, self.slot_index + 1):
            raise ValueError("observed gains must cover exactly slots 0..slot_index")


@dataclass(frozen=True)
class SchemeResult:
    scheme_name: str
    power: PowerMatrix
    report: RateReport
    solve_stats: dict = field(default_factory=dict, compare=False)


def predict_gains(actual_h, from_slot: int, model: PredictionModel, rngs):
    """Noisy power gains for slots ``from_slot + 1 .. N - 1``.

    ``rngs`` is one generator per user. The error for user ``k`` is complex
    Gaussian with variance ``sigma_e^2 * mean_n |h[k, n]|^2``.
    """
    h = np.asarray(actual_h)
    K, N = h.shape
    if not 0 <= from_slot < N - 1:
        raise ValueError(f"no future slots after slot {from_slot} of {N}")
    future = h[:, from_slot + 1:]
    if model.error_variance_normalized == 0:
        return np.abs(future) ** 2
    scale = np.sqrt(model.error_variance_normalized * np.mean(np.abs(h) ** 2, axis=1) / 2)
    z = np.stack([r.standard_normal((2, N - from_slot - 1)) for r in rngs])
    pred = future + scale[:, None] * (z[:, 0] + 1j * z[:, 1])
    # A draw landing exactly on zero would make the gain invalid for the solver.
    return np.maximum(np.abs(pred) ** 2, np.finfo(float).tiny)


def horizon_weights(n_slots: int, slot_index: int, horizon_end: int, uniform: bool):
    """Weights of past slots and of the optimized slots ``slot_index .. horizon_end - 1``."""
    n = slot_index + 1
    if uniform:
        return np.full(slot_index, 1.0 / n_slots), np.full(horizon_end - slot_index, 1.0 / n_slots)
    past = np.full(slot_index, 1.0 / n)
    ahead = np.empty(horizon_end - slot_index)
    ahead[0] = 1.0 / n
    # At the last slot the future sum is empty.
    ahead[1:] = 1.0 / (n_slots - n) if n < n_slots else 0.0
    return past, ahead


def apass_step(state: ApassState, predictions, p_total, sigma2, cfg: SolverConfig = SolverConfig(),
               uniform_weights: bool = True, init=None):
    """Solve the rest-of-pass problem at ``state.slot_index`` and return the full SCA result.

    ``predictions`` covers the slots after the current one (may be empty).
    The allocation to commit is ``result.power.p[:, 0]``.
    """
    n, N = state.slot_index, state.n_slots
    predictions = np.asarray(predictions, dtype=float).reshape(state.observed_g.shape[0], -1)
    g = np.hstack([state.observed_g[:, n:n + 1], predictions])
    end = n + g.shape[1]
    if end > N:
        raise ValueError("predictions run past the end of the pass")
    w_past, w = horizon_weights(N, n, end, uniform_weights)
    fixed = None
    if n:
        fixed = rate_matrix(state.committed, state.observed_g[:, :n], sigma2) @ w_past
    try:
        return sca_maxmin(g, sigma2, p_total, w, cfg, init=init, fixed_rate=fixed, horizon=N)
    except GpSolverError as exc:
        raise SchemeError(f"slot {n}: {exc}", slot=n) from exc


def _prediction_rngs(model: PredictionModel, trial: int, step: int, K: int):
    return [rngmod.stream(model.rng_seed, rngmod.PREDICTION, trial, step, k) for k in range(K)]


def _receding(realization, model, p_total, sigma2, cfg, lookahead, name, trial, timing):
    h, g = realization.h, realization.g
    K, N = g.shape
    committed = np.zeros((K, N))
    tail = None
    stats = {"sca_iterations": [], "step_objective": [], "wall_s": []}
    for n in range(N):
        end = N if lookahead is None else min(N, n + 1 + lookahead)
        state = ApassState(committed[:, :n], g[:, :n + 1], n, N)
        if end > n + 1:
            pred = predict_gains(h, n, model, _prediction_rngs(model, trial, n, K))[:, :end - n - 1]
        else:
            pred = np.zeros((K, 0))
        init = None
        if tail is not None and tail.shape[1] == end - n:
            init = tail
        t0 = time.perf_counter() if timing else 0.0
        res = apass_step(state, pred, p_total, sigma2, cfg, model.uniform_horizon_weights, init)
        if timing:
            stats["wall_s"].append(time.perf_counter() - t0)
        committed[:, n] = res.power.p[:, 0]
        # Warm start: the unused part of this plan seeds the next step.
        tail = res.raw[:, 1:] if lookahead is None else None
        stats["sca_iterations"].append(res.iterations)
        stats["step_objective"].append(res.objective)
    P = PowerMatrix(committed, p_total)
    return SchemeResult(name, P, rate_report(P, g, sigma2), stats)


def run_apass(realization, model: PredictionModel, p_total, sigma2, cfg: SolverConfig = SolverConfig(),
              trial: int = 0, timing: bool = False) -> SchemeResult:
    """Receding-horizon allocation over the whole pass, one committed slot per step."""
    return _receding(realization, model, p_total, sigma2, cfg, None, "apass", trial, timing)


def run_sts(realization, model: PredictionModel, p_total, sigma2, cfg: SolverConfig = SolverConfig(),
            trial: int = 0, timing: bool = False) -> SchemeResult:
    """Like APASS but looking only one slot ahead."""
    return _receding(realization, model, p_total, sigma2, cfg, 1, "sts", trial, timing)


def run_equal_power(realization, p_total, sigma2) -> SchemeResult:
    g = realization.g
    P = PowerMatrix(np.full(g.shape, p_total / g.shape[0]), p_total)
    return SchemeResult("equal_power", P, rate_report(P, g, sigma2))


def water_fill(inv_snr, p_total, rtol=1e-10) -> np.ndarray:
    """Classic water-filling ``p_k = max(0, mu - inv_snr_k)`` with ``sum p = p_total``."""
    inv_snr = np.asarray(inv_snr, dtype=float)
    lo, hi = inv_snr.min(), inv_snr.min() + p_total
    while hi - lo > rtol * hi:
        mu = 0.5 * (lo + hi)
        if np.maximum(mu - inv_snr, 0.0).sum() > p_total:
            hi = mu
        else:
            lo = mu
    p = np.maximum(lo - inv_snr, 0.0)
    # Bisection leaves the level slightly low; give the remainder to active users.
    active = p > 0
    p[active] += (p_total - p.sum()) / active.sum()
    return p


def run_water_filling(realization, p_total, sigma2) -> SchemeResult:
    """Per-slot water-filling on noise-only channels, scored with interference."""
    g = realization.g
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), g.shape)
    p = np.column_stack([water_fill(sigma2[:, n] / g[:, n], p_total) for n in range(g.shape[1])])
    P = PowerMatrix(p, p_total)
    return SchemeResult("water_filling", P, rate_report(P, g, sigma2))
