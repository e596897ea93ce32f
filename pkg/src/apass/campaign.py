"""Seeded Monte Carlo campaigns over channel realizations.

Each trial draws users and one channel realization from streams derived
from ``(master_seed, trial)``, computes the genie bound, then runs every
configured scheme at every prediction-error level on that realization.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import rng as rngmod
from .channel import FadingConfig, generate_realization, load_tables
from .config import ExperimentConfig
from .geometry import elevation_profile, place_users
from .linkmodel import noise_variance
from .maxmin_gp import GpInstance, LogDomainGp, SolverConfig, sca_maxmin
from .schemes import (PredictionModel, SchemeError, run_apass, run_equal_power, run_sts,
                      run_water_filling)

log = logging.getLogger(__name__)

WORKERS_ENV = "APASS_WORKERS"
RESULT_COLUMNS = ("trial", "scheme", "sigma_e2", "min_rate", "genie_fraction", "fairness", "solve_ms")


@dataclass(frozen=True)
class TrialRow:
    trial: int
    scheme: str
    sigma_e2: float
    min_rate: float
    genie_fraction: float
    fairness: float
    solve_ms: float | None = None


@dataclass(frozen=True)
class TrialOutcome:
    trial: int
    rows: tuple = ()
    genie_rate: float = float("nan")
    genie_iterations: int = 0
    error: str | None = None


@dataclass(frozen=True)
class SchemeStats:
    n: int
    mean_min_rate: float
    mean_genie_fraction: float
    mean_fairness: float
    cdf: np.ndarray = field(repr=False)  # sorted min-rates


@dataclass
class CampaignSummary:
    rows: list
    genie: dict            # trial -> genie min-rate
    failures: list         # (trial, message)
    stats: dict            # (scheme, sigma_e2) -> SchemeStats
    schemes: tuple = ()
    sweep: tuple = ()


# -- one trial ---------------------------------------------------------------

def build_trial(cfg: ExperimentConfig, trial: int, tables=None):
    """Users, slot grid and channel realization of ``trial``."""
    sc, sy = cfg.scenario, cfg.system
    seed = cfg.campaign.master_seed
    orbit = cfg.orbit()
    tables = tables or load_tables(sc.tables_path or None)
    users = place_users(sy.n_users, sc.center_lat_deg, sc.center_lon_deg, sc.area_radius_km,
                        sc.earth_radius_km, rngmod.stream(seed, rngmod.USERS, trial))
    grid = elevation_profile(orbit, users, cfg.pass_geometry(), sy.n_slots, sy.coherence_s)
    fading = FadingConfig(sy.n_sinusoids, sy.rician_k, rngmod.child_seed(seed, rngmod.TRIAL, trial))
    return generate_realization(grid, orbit, tables, fading, sc.environment)


def _timed(fn, timing):
    t0 = time.perf_counter()
    out = fn()
    return out, (time.perf_counter() - t0) * 1e3 if timing else None


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialOutcome:
    try:
        return _run_trial(cfg, trial)
    except (SchemeError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        log.warning("trial %d failed: %s", trial, exc)
        return TrialOutcome(trial, error=f"{type(exc).__name__}: {exc}")


def _run_trial(cfg: ExperimentConfig, trial: int) -> TrialOutcome:
    camp, solver = cfg.campaign, cfg.solver
    real = build_trial(cfg, trial)
    sigma2 = noise_variance(cfg.noise())
    p_total = cfg.system.eirp_w
    genie = sca_maxmin(real.g, sigma2, p_total, cfg=solver)

    results = []  # (scheme, sigma_e2, SchemeResult, ms)
    fixed = {}
    for name, fn in (("equal_power", run_equal_power), ("water_filling", run_water_filling)):
        if name in camp.schemes:
            fixed[name] = _timed(lambda fn=fn: fn(real, p_total, sigma2), camp.timing)
    for s2 in camp.sweep:
        model = PredictionModel(s2, camp.master_seed, camp.uniform_horizon_weights)
        for name in camp.schemes:
            if name in fixed:
                res, ms = fixed[name]
            else:
                runner = run_apass if name == "apass" else run_sts
                res, ms = _timed(lambda: runner(real, model, p_total, sigma2, solver, trial), camp.timing)
            results.append((name, s2, res, ms))

    # The bound must dominate every scheme; SCA stops at KKT points, so
    # continue it from any allocation that beats it.
    genie_rate = genie.min_rate
    best = max(results, key=lambda r: r[2].report.min_rate, default=None)
    if best is not None and best[2].report.min_rate > genie_rate:
        polished = sca_maxmin(real.g, sigma2, p_total, cfg=solver, init=best[2].power.p)
        genie_rate = max(genie_rate, polished.min_rate, best[2].report.min_rate)

    rows = tuple(
        TrialRow(trial, name, float(s2), res.report.min_rate,
                 res.report.min_rate / genie_rate if genie_rate > 0 else float("nan"),
                 res.report.fairness, ms)
        for name, s2, res, ms in results
    )
    return TrialOutcome(trial, rows, genie_rate, genie.iterations)


# -- campaign ----------------------------------------------------------------

def worker_count(cfg: ExperimentConfig) -> int:
    raw = os.environ.get(WORKERS_ENV)
    return max(1, int(raw)) if raw else max(1, cfg.campaign.workers)


def _trial_star(args):
    return run_trial(*args)


def run_campaign(cfg: ExperimentConfig, trials=None) -> CampaignSummary:
    trials = list(range(cfg.campaign.n_trials)) if trials is None else list(trials)
    workers = worker_count(cfg)
    if workers > 1 and len(trials) > 1:
        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_trial_star, [(cfg, t) for t in trials]))
    else:
        outcomes = [run_trial(cfg, t) for t in trials]
    return summarize(outcomes, cfg.campaign.schemes, cfg.campaign.sweep)


def summarize(outcomes, schemes, sweep) -> CampaignSummary:
    outcomes = sorted(outcomes, key=lambda o: o.trial)
    order = {s: i for i, s in enumerate(schemes)}
    rows = sorted((r for o in outcomes for r in o.rows),
                  key=lambda r: (r.trial, order[r.scheme], r.sigma_e2))
    stats = {}
    for name in schemes:
        for s2 in sweep:
            sel = [r for r in rows if r.scheme == name and r.sigma_e2 == float(s2)]
            if not sel:
                continue
            rates = np.array([r.min_rate for r in sel])
            stats[(name, float(s2))] = SchemeStats(
                len(sel), float(rates.mean()), float(np.mean([r.genie_fraction for r in sel])),
                float(np.mean([r.fairness for r in sel])), np.sort(rates))
    return CampaignSummary(
        rows=rows,
        genie={o.trial: o.genie_rate for o in outcomes if o.error is None},
        failures=[(o.trial, o.error) for o in outcomes if o.error is not None],
        stats=stats, schemes=tuple(schemes), sweep=tuple(float(s) for s in sweep),
    )


def cdf_points(samples) -> np.ndarray:
    """Empirical CDF as rows ``(value, i / n)`` over the sorted samples."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("cannot build a CDF from no samples")
    return np.column_stack([x, np.arange(1, x.size + 1) / x.size])


def ratio_table(summary: CampaignSummary) -> dict:
    """Mean min-rate ratios ``{(numerator, denominator, sigma_e2): ratio}``.

    Means are taken over trials where both schemes have a row. A zero
    denominator gives ``None``.
    """
    by = {}
    for r in summary.rows:
        by.setdefault((r.scheme, r.sigma_e2), {})[r.trial] = r.min_rate
    out = {}
    for s2 in summary.sweep:
        for a in summary.schemes:
            for b in summary.schemes:
                ra, rb = by.get((a, s2), {}), by.get((b, s2), {})
                common = sorted(set(ra) & set(rb))
                if not common:
                    continue
                den = float(np.mean([rb[t] for t in common]))
                num = float(np.mean([ra[t] for t in common]))
                out[(a, b, s2)] = num / den if den > 0 else None
    return out


# -- output ------------------------------------------------------------------

def _num(v) -> str:
    return "" if v is None else repr(float(v))


def write_outputs(summary: CampaignSummary, out_dir, emit_cdf=False) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "results.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in summary.rows:
            w.writerow([r.trial, r.scheme, _num(r.sigma_e2), _num(r.min_rate),
                        _num(r.genie_fraction), _num(r.fairness), _num(r.solve_ms)])
    written.append(path)

    path = out / "summary.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scheme", "sigma_e2", "n", "mean_min_rate", "mean_genie_fraction", "mean_fairness"])
        for (name, s2), st in summary.stats.items():
            w.writerow([name, _num(s2), st.n, _num(st.mean_min_rate),
                        _num(st.mean_genie_fraction), _num(st.mean_fairness)])
    written.append(path)

    path = out / "genie.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trial", "genie_min_rate"])
        for t, v in sorted(summary.genie.items()):
            w.writerow([t, _num(v)])
        for t, msg in summary.failures:
            w.writerow([t, "failed: " + msg])
    written.append(path)

    if emit_cdf:
        for (name, s2), st in summary.stats.items():
            path = out / f"cdf_{name}_{s2:g}.csv"
            with open(path, "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["min_rate", "cumulative_fraction"])
                for v, c in cdf_points(st.cdf):
                    w.writerow([_num(v), _num(c)])
            written.append(path)
    return written


def write_allocation(path, trial, scheme, power, truncate_w) -> None:
    """Per-slot allocation dump; ``scheduled`` marks powers above ``truncate_w``."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trial", "scheme", "slot", "user", "power", "scheduled"])
        K, N = power.shape
        for n in range(N):
            for k in range(K):
                p = float(power.p[k, n])
                w.writerow([trial, scheme, n, k, repr(p), int(p > truncate_w)])


# -- complexity benchmark -----------------------------------------------------

@dataclass(frozen=True)
class BenchmarkResult:
    n_users: tuple
    n_slots: int
    median_ms: tuple
    slope: float
    slope_ci: tuple  # 90% interval


def complexity_benchmark(cfg: ExperimentConfig, user_counts=(2, 4, 8, 16), n_slots=10,
                         repeats=5, solver: SolverConfig = SolverConfig()) -> BenchmarkResult:
    """Median wall time of one condensed GP solve from equal power, per K.

    The slope is the least-squares fit of log(time) on log(K).
    """
    sigma2 = noise_variance(cfg.noise())
    p_total = cfg.system.eirp_w
    med = []
    for K in user_counts:
        sub = dataclasses.replace(cfg, system=dataclasses.replace(cfg.system, n_users=K, n_slots=n_slots))
        times = []
        for rep in range(repeats):
            g = build_trial(sub, rep).g
            inst = GpInstance(g, sigma2, p_total, np.full(n_slots, 1.0 / n_slots), np.full(g.shape, p_total / K))
            prog = LogDomainGp(inst, solver.p_floor)
            x0 = prog.start_point(inst.anchor / p_total)
            prog.solve(x0, tol=solver.inner_tol)  # compile and warm caches
            t0 = time.perf_counter()
            prog.solve(x0, tol=solver.inner_tol, max_iter=solver.max_newton_iters)
            times.append((time.perf_counter() - t0) * 1e3)
        med.append(float(np.median(times)))
    fit = sps.linregress(np.log(user_counts), np.log(med))
    half = sps.t.ppf(0.95, len(user_counts) - 2) * fit.stderr if len(user_counts) > 2 else float("nan")
    return BenchmarkResult(tuple(user_counts), n_slots, tuple(med), float(fit.slope),
                           (float(fit.slope - half), float(fit.slope + half)))
