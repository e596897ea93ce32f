"""Rate mathematics for the superposition downlink."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import k as BOLTZMANN

BUDGET_RTOL = 1e-9


@dataclass(frozen=True)
class NoiseConfig:
    temperature_k: float = 290.0
    bandwidth_hz: float = 5e6

    def __post_init__(self):
        if self.temperature_k < 0 or self.bandwidth_hz <= 0:
            raise ValueError("noise temperature must be >= 0 and bandwidth > 0")


@dataclass(frozen=True)
class PowerMatrix:
    """Per-user, per-slot transmit powers ``p[k, n]`` under a per-slot budget."""

    p: np.ndarray = field(repr=False)
    p_total: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2:
            raise ValueError("power matrix must be K x N")
        if np.any(p < 0):
            raise ValueError("negative power")
        if np.any(p.sum(axis=0) > self.p_total * (1 + BUDGET_RTOL)):
            raise ValueError("per-slot power budget exceeded")
        object.__setattr__(self, "p", p)

    @property
    def shape(self):
        return self.p.shape


@dataclass(frozen=True)
class RateReport:
    per_user_rate: np.ndarray
    min_rate: float
    fairness: float
    degenerate: bool = False  # all rates zero, fairness set to 1


def noise_variance(cfg: NoiseConfig) -> float:
    return BOLTZMANN * cfg.temperature_k * cfg.bandwidth_hz


def sinr(p_slot, g_kn: float, k: int, sigma2: float) -> float:
    if sigma2 <= 0:
        raise ValueError("noise power must be positive")
    p_slot = np.asarray(p_slot, dtype=float)
    interference = p_slot.sum() - p_slot[k]
    return g_kn * p_slot[k] / (g_kn * interference + sigma2)


def slot_rate(p_slot, g_kn: float, k: int, sigma2: float) -> float:
    return float(np.log2(1 + sinr(p_slot, g_kn, k, sigma2)))


def rate_matrix(p, g, sigma2) -> np.ndarray:
    """Per-slot rates R[k, n] in bits/s/Hz for all users at once.

    ``sigma2`` may be a scalar or a (K, N) array.
    """
    p = np.asarray(p, dtype=float)
    g = np.asarray(g, dtype=float)
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), g.shape)
    if np.any(sigma2 <= 0):
        raise ValueError("noise power must be positive")
    K = p.shape[0]
    interference = (np.ones((K, K)) - np.eye(K)) @ p
    return np.log2(1 + g * p / (g * interference + sigma2))


def horizon_rate(P: PowerMatrix, g_k, k: int, sigma2) -> float:
    """Average of the slot rates of user ``k`` over the horizon."""
    g_k = np.asarray(g_k, dtype=float)
    if g_k.shape != (P.shape[1],):
        raise ValueError("gain vector length does not match the number of slots")
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (P.shape[1],))
    return float(np.mean([slot_rate(P.p[:, n], g_k[n], k, sigma2[n]) for n in range(P.shape[1])]))


def jain_index(rates) -> float:
    rates = np.asarray(rates, dtype=float)
    sq = np.sum(rates**2)
    if sq == 0:
        return 1.0
    return float(rates.sum() ** 2 / (len(rates) * sq))


def rate_report(P: PowerMatrix, realization, sigma2) -> RateReport:
    """Horizon rates, minimum and Jain's index against ``realization.g``."""
    g = realization.g if hasattr(realization, "g") else np.asarray(realization)
    if g.shape != P.shape:
        raise ValueError(f"power matrix {P.shape} does not match gains {g.shape}")
    rates = rate_matrix(P.p, g, sigma2).mean(axis=1)
    return RateReport(rates, float(rates.min()), jain_index(rates), bool(np.all(rates == 0)))
