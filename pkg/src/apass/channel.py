"""Space-ground channel generator.

Large-scale loss (free space, shadowing, clutter, gases), an independent
per-slot LoS/NLoS state, and sum-of-sinusoids small-scale fading that is
Rician in LoS and Rayleigh in NLoS.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from . import rng as rngmod
from .geometry import OrbitConfig, SlotGrid, max_doppler, slant_range

ENVIRONMENTS = ("rural", "suburban", "urban", "dense_urban")
TABLE_COLUMNS = (
    "environment", "band_low_deg", "band_high_deg", "p_los",
    "sigma_los_db", "sigma_nlos_db", "clutter_db", "gas_zenith_db",
)


class ChannelConfigError(ValueError):
    pass


class TableError(LookupError):
    pass


@dataclass(frozen=True)
class BandTable:
    """Lookup rows for one environment, sorted by elevation band."""

    band_low_deg: np.ndarray
    band_high_deg: np.ndarray
    p_los: np.ndarray
    sigma_los_db: np.ndarray
    sigma_nlos_db: np.ndarray
    clutter_db: np.ndarray
    gas_zenith_db: np.ndarray

    def index(self, alpha) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        flat = np.atleast_1d(alpha)
        idx = np.searchsorted(self.band_high_deg, flat, side="right")
        # The top band is closed at its upper edge.
        idx = np.where(flat == self.band_high_deg[-1], len(self.band_high_deg) - 1, idx)
        ok = idx < len(self.band_high_deg)
        ok[ok] &= flat[ok] >= self.band_low_deg[idx[ok]]
        if not np.all(ok):
            raise TableError(f"elevation {flat[~ok]} deg not covered by the tables")
        return idx.reshape(alpha.shape)


@dataclass(frozen=True)
class LargeScaleTables:
    environments: dict = field(repr=False)
    source: str = ""

    def env(self, name: str) -> BandTable:
        try:
            return self.environments[name]
        except KeyError:
            raise ChannelConfigError(
                f"unknown environment {name!r}; have {sorted(self.environments)}"
            ) from None


def load_tables(path=None) -> LargeScaleTables:
    """Read the lookup-table CSV (the packaged defaults if ``path`` is None)."""
    if path is None:
        text = resources.files("apass").joinpath("data/ntn_tables.csv").read_text()
        source = "packaged defaults"
    else:
        text = Path(path).read_text()
        source = str(path)
    rows = list(csv.DictReader(line for line in text.splitlines() if not line.startswith("#")))
    if not rows or set(TABLE_COLUMNS) - set(rows[0]):
        raise ChannelConfigError(f"{source}: expected columns {', '.join(TABLE_COLUMNS)}")

    envs = {}
    for name in dict.fromkeys(r["environment"] for r in rows):
        sub = sorted((r for r in rows if r["environment"] == name), key=lambda r: float(r["band_low_deg"]))
        cols = {c: np.array([float(r[c]) for r in sub]) for c in TABLE_COLUMNS[1:]}
        if np.any(cols["band_low_deg"][1:] != cols["band_high_deg"][:-1]):
            raise ChannelConfigError(f"{source}: bands for {name!r} have gaps or overlaps")
        if np.any((cols["p_los"] < 0) | (cols["p_los"] > 1)):
            raise ChannelConfigError(f"{source}: LoS probabilities for {name!r} outside [0, 1]")
        for c in ("sigma_los_db", "sigma_nlos_db", "clutter_db", "gas_zenith_db"):
            if np.any(cols[c] < 0):
                raise ChannelConfigError(f"{source}: negative {c} for {name!r}")
        envs[name] = BandTable(**cols)
    return LargeScaleTables(envs, source)


@dataclass(frozen=True)
class FadingConfig:
    """Small-scale fading settings.

    With ``normalize_power`` the scattered component is scaled by 1/sqrt(2)
    so that it has unit mean power and ``rician_k`` is the true K-factor.
    """

    n_sinusoids: int = 10
    rician_k: float = 10.0
    rng_seed: int = 0
    normalize_power: bool = True

    def __post_init__(self):
        if self.n_sinusoids < 1:
            raise ChannelConfigError("n_sinusoids must be >= 1")
        if self.rician_k < 0:
            raise ChannelConfigError("rician_k must be >= 0")


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray = field(repr=False)  # complex (K, N)
    g: np.ndarray = field(repr=False)  # |h|^2
    los: np.ndarray = field(repr=False)  # bool (K, N)
    elevation_deg: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.g.shape

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["user", "slot", "state", "g_linear", "h_re", "h_im", "elevation_deg"])
            K, N = self.g.shape
            for k in range(K):
                for n in range(N):
                    h = self.h[k, n]
                    w.writerow([k, n, "LoS" if self.los[k, n] else "NLoS", repr(float(self.g[k, n])),
                                repr(float(h.real)), repr(float(h.imag)),
                                repr(float(self.elevation_deg[k, n]))])


def fspl_db(alpha, orbit: OrbitConfig):
    d_m = np.asarray(slant_range(alpha, orbit)) * 1e3
    out = 20 * np.log10(4 * np.pi * d_m * orbit.carrier_hz / SPEED_OF_LIGHT)
    return out if out.ndim else float(out)


def shadow_sigma_db(los, alpha, tables: LargeScaleTables, environment="rural"):
    t = tables.env(environment)
    i = t.index(alpha)
    return np.where(los, t.sigma_los_db[i], t.sigma_nlos_db[i])


def sample_shadow_fading_db(los, alpha, tables: LargeScaleTables, rng, environment="rural"):
    """Zero-mean normal draw in dB, one per (state, angle) entry."""
    sigma = shadow_sigma_db(los, alpha, tables, environment)
    out = sigma * rng.standard_normal(np.shape(sigma))
    return out if np.ndim(out) else float(out)


def clutter_loss_db(los, alpha, tables: LargeScaleTables, environment="rural"):
    t = tables.env(environment)
    return np.where(los, 0.0, t.clutter_db[t.index(alpha)])


def gas_loss_db(alpha, tables: LargeScaleTables, environment="rural"):
    """Zenith attenuation scaled by the cosecant of the elevation."""
    t = tables.env(environment)
    alpha = np.asarray(alpha, dtype=float)
    return t.gas_zenith_db[t.index(alpha)] / np.sin(np.radians(alpha))


def total_path_loss_db(los, alpha, orbit: OrbitConfig, tables: LargeScaleTables,
                       rng=None, environment="rural", sf_db=None):
    if sf_db is None:
        if rng is None:
            raise ValueError("need rng or sf_db")
        sf_db = sample_shadow_fading_db(los, alpha, tables, rng, environment)
    out = (fspl_db(alpha, orbit) + sf_db + clutter_loss_db(los, alpha, tables, environment)
           + gas_loss_db(alpha, tables, environment))
    return out if np.ndim(out) else float(out)


def sample_los_state(alpha, environment, tables: LargeScaleTables, rng):
    t = tables.env(environment)
    p = t.p_los[t.index(alpha)]
    out = rng.random(np.shape(p)) < p
    return out if np.ndim(out) else bool(out)


def doppler_frequencies(nu_max, n_sinusoids: int) -> np.ndarray:
    """Sinusoid frequencies, shape ``nu_max.shape + (L, 2)`` (last axis: quadrature)."""
    L = n_sinusoids
    l = np.arange(1, L + 1)[:, None]
    sign = np.array([1.0, -1.0])[None, :]  # (-1)**(i-1) for i = 1, 2
    base = np.cos(np.pi * (l - 0.5) / (2 * L) + sign * np.pi / (12 * L))
    return np.asarray(nu_max, dtype=float)[..., None, None] * base


def draw_phases(n_sinusoids: int, rng) -> np.ndarray:
    return rng.uniform(0.0, 2 * np.pi, size=(n_sinusoids, 2))


def sos_fading(t, nu_max, config: FadingConfig, phases: np.ndarray):
    """Complex sum-of-sinusoids fading a(t); each quadrature has unit mean power.

    ``t`` and ``nu_max`` broadcast against each other; ``phases`` has shape (L, 2).
    """
    L = config.n_sinusoids
    if phases.shape != (L, 2):
        raise ChannelConfigError(f"phases must have shape ({L}, 2)")
    t, nu_max = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(nu_max, dtype=float))
    nu = doppler_frequencies(nu_max, L)
    arg = 2 * np.pi * nu * t[..., None, None] + phases
    a = np.sqrt(2.0 / L) * np.cos(arg).sum(axis=-2)
    out = a[..., 0] + 1j * a[..., 1]
    return out if out.ndim else complex(out)


def fading_coefficient(t, los, nu_max, fading: FadingConfig, phases, phi_r):
    """Small-scale coefficient before large-scale scaling."""
    a = np.asarray(sos_fading(t, nu_max, fading, phases))
    if fading.normalize_power:
        a = a / np.sqrt(2.0)
    kappa = fading.rician_k
    if np.isinf(kappa):
        scatter, direct = 0.0, 1.0
    else:
        scatter, direct = 1 / np.sqrt(kappa + 1), np.sqrt(kappa / (kappa + 1))
    ray = np.exp(1j * (2 * np.pi * np.asarray(nu_max) * np.asarray(t) + phi_r))
    return np.where(los, scatter * a + direct * ray, a)


def channel_gain(t, los, alpha, orbit: OrbitConfig, tables: LargeScaleTables,
                 fading: FadingConfig, phases, phi_r, sf_db, environment="rural"):
    gamma_db = total_path_loss_db(los, alpha, orbit, tables, environment=environment, sf_db=sf_db)
    coeff = fading_coefficient(t, los, max_doppler(alpha, orbit), fading, phases, phi_r)
    out = coeff / np.sqrt(10 ** (np.asarray(gamma_db) / 10))
    return out if out.ndim else complex(out)


def generate_realization(grid: SlotGrid, orbit: OrbitConfig, tables: LargeScaleTables,
                         fading: FadingConfig, environment="rural", seed=None) -> ChannelRealization:
    """Block-fading channel for all users over the slot grid.

    Each user has its own streams for fading phases, LoS states and shadowing,
    derived from ``seed`` (default ``fading.rng_seed``).
    """
    seed = fading.rng_seed if seed is None else seed
    tables.env(environment)
    K, N = grid.elevation_deg.shape
    h = np.empty((K, N), dtype=complex)
    los = np.empty((K, N), dtype=bool)
    for k in range(K):
        alpha = grid.elevation_deg[k]
        phase_rng = rngmod.stream(seed, rngmod.PHASES, k)
        phases = draw_phases(fading.n_sinusoids, phase_rng)
        phi_r = phase_rng.uniform(0.0, 2 * np.pi)
        los[k] = sample_los_state(alpha, environment, tables, rngmod.stream(seed, rngmod.LOS, k))
        sf = sample_shadow_fading_db(los[k], alpha, tables, rngmod.stream(seed, rngmod.SHADOW, k), environment)
        h[k] = channel_gain(grid.slot_epoch_s, los[k], alpha, orbit, tables, fading,
                            phases, phi_r, sf, environment)
    g = h.real**2 + h.imag**2
    return ChannelRealization(h, g, los, grid.elevation_deg.copy())
