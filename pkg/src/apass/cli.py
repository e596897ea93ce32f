"""Command-line entry point."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

from . import campaign as cp
from .channel import ChannelConfigError, TableError
from .config import PROFILES, ConfigError, format_config, load_config
from .geometry import ScenarioError
from .linkmodel import noise_variance
from .maxmin_gp import sca_maxmin
from .schemes import (SCHEMES, PredictionModel, run_apass, run_equal_power, run_sts,
                      run_water_filling)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apass", description="Receding-horizon max-min power allocation for a LEO downlink.")
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk",
                   help="built-in defaults to start from (default: desk)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--trials", type=int, help="number of Monte Carlo trials")
    p.add_argument("--workers", type=int, help=f"worker processes (env {cp.WORKERS_ENV} overrides)")
    p.add_argument("--emit-cdf", action="store_true", help="write per-scheme CDF files")
    p.add_argument("--timing", action="store_true", help="record wall time in solve_ms (output no longer byte-stable)")
    p.add_argument("--print-default-config", action="store_true", help="print the full-scale defaults as INI and exit")
    p.add_argument("-v", "--verbose", action="count", default=0)

    sub = p.add_subparsers(dest="command")
    s = sub.add_parser("simulate-channel", help="write one channel realization as CSV")
    s.add_argument("--trial", type=int, default=0)

    s = sub.add_parser("solve-genie", help="genie-aided max-min bound of one realization")
    s.add_argument("--trial", type=int, default=0)
    s.add_argument("--trace", action="store_true", help="write the SCA iteration trace")

    s = sub.add_parser("run", help="run one scheme on one realization")
    s.add_argument("scheme", choices=SCHEMES)
    s.add_argument("--trial", type=int, default=0)
    s.add_argument("--sigma-e2", type=float, default=0.0, help="normalized prediction-error variance")
    s.add_argument("--dump", action="store_true", help="write the per-slot allocation")

    sub.add_parser("campaign", help="Monte Carlo comparison of all configured schemes")

    s = sub.add_parser("sweep-error", help="genie fraction and fairness against prediction error")
    s.add_argument("--values", type=_floats, help="comma-separated error variances")

    s = sub.add_parser("benchmark", help="GP solve time against the number of users")
    s.add_argument("--users", type=_floats, default=(2, 4, 8, 16))
    s.add_argument("--slots", type=int, default=10)
    s.add_argument("--repeats", type=int, default=5)
    return p


def _config(args):
    cfg = load_config(args.config, args.profile)
    camp = cfg.campaign
    if args.seed is not None:
        camp = dataclasses.replace(camp, master_seed=args.seed)
    if args.trials is not None:
        camp = dataclasses.replace(camp, n_trials=args.trials)
    if args.workers is not None:
        camp = dataclasses.replace(camp, workers=args.workers)
    if args.timing:
        camp = dataclasses.replace(camp, timing=True)
    if getattr(args, "values", None):
        camp = dataclasses.replace(camp, sweep=args.values)
    cfg = dataclasses.replace(cfg, campaign=camp)
    if args.out:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    return cfg


def _out(cfg) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_simulate_channel(cfg, args):
    real = cp.build_trial(cfg, args.trial)
    path = _out(cfg) / f"channel_trial{args.trial}.csv"
    real.write_csv(path)
    K, N = real.shape
    print(f"trial {args.trial}: {K} users x {N} slots, LoS fraction {real.los.mean():.2f} -> {path}")
    return EXIT_OK


def cmd_solve_genie(cfg, args):
    real = cp.build_trial(cfg, args.trial)
    res = sca_maxmin(real.g, noise_variance(cfg.noise()), cfg.system.eirp_w, cfg=cfg.solver)
    out = _out(cfg)
    cp.write_allocation(out / f"genie_trial{args.trial}.csv", args.trial, "genie", res.power,
                        cfg.solver.truncate * cfg.system.eirp_w)
    if args.trace:
        with open(out / f"genie_trace_trial{args.trial}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["iteration", "b", "min_rate", "delta"])
            for it, b, r, d in res.trace:
                w.writerow([it, repr(b), repr(r), repr(d)])
    status = "converged" if res.converged else "iteration cap reached"
    print(f"genie min-rate {res.min_rate:.6f} bit/s/Hz after {res.iterations} SCA iterations ({status})")
    return EXIT_OK


def cmd_run(cfg, args):
    real = cp.build_trial(cfg, args.trial)
    sigma2 = noise_variance(cfg.noise())
    p_total = cfg.system.eirp_w
    model = PredictionModel(args.sigma_e2, cfg.campaign.master_seed, cfg.campaign.uniform_horizon_weights)
    if args.scheme == "apass":
        res = run_apass(real, model, p_total, sigma2, cfg.solver, args.trial)
    elif args.scheme == "sts":
        res = run_sts(real, model, p_total, sigma2, cfg.solver, args.trial)
    elif args.scheme == "equal_power":
        res = run_equal_power(real, p_total, sigma2)
    else:
        res = run_water_filling(real, p_total, sigma2)
    if args.dump:
        cp.write_allocation(_out(cfg) / f"{args.scheme}_trial{args.trial}.csv", args.trial, args.scheme,
                            res.power, cfg.solver.truncate * p_total)
    print(f"{args.scheme}: min-rate {res.report.min_rate:.6f} bit/s/Hz, fairness {res.report.fairness:.4f}")
    return EXIT_OK


def _print_summary(summary):
    print(f"{'scheme':<14} {'sigma_e2':>8} {'n':>4} {'min-rate':>10} {'of genie':>9} {'fairness':>9}")
    for (name, s2), st in summary.stats.items():
        print(f"{name:<14} {s2:>8g} {st.n:>4} {st.mean_min_rate:>10.4f} "
              f"{st.mean_genie_fraction:>9.3f} {st.mean_fairness:>9.4f}")


def _finish(cfg, summary, args):
    written = cp.write_outputs(summary, cfg.output_dir, args.emit_cdf)
    print(f"wrote {len(written)} files to {cfg.output_dir}")
    if summary.failures:
        print(f"{len(summary.failures)} failed trials", file=sys.stderr)
    return EXIT_SOLVER if len(summary.failures) > cfg.campaign.max_failures else EXIT_OK


def cmd_campaign(cfg, args):
    summary = cp.run_campaign(cfg)
    _print_summary(summary)
    ratios = cp.ratio_table(summary)
    if "apass" in summary.schemes:
        for (a, b, s2), r in ratios.items():
            if a == "apass" and b != "apass":
                print(f"apass / {b} at sigma_e2={s2:g}: " + ("undefined" if r is None else f"{r:.3f}"))
    return _finish(cfg, summary, args)


def cmd_sweep_error(cfg, args):
    summary = cp.run_campaign(cfg)
    print(f"{'sigma_e2':>8} " + " ".join(f"{s:>22}" for s in summary.schemes))
    for s2 in summary.sweep:
        cells = []
        for name in summary.schemes:
            st = summary.stats.get((name, s2))
            cells.append(f"{'-':>22}" if st is None else
                         f"{st.mean_genie_fraction:>10.3f} / {st.mean_fairness:<9.4f}")
        print(f"{s2:>8g} " + " ".join(cells))
    return _finish(cfg, summary, args)


def cmd_benchmark(cfg, args):
    res = cp.complexity_benchmark(cfg, tuple(int(k) for k in args.users), args.slots, args.repeats)
    for K, ms in zip(res.n_users, res.median_ms):
        print(f"K={K:<3} N={res.n_slots:<3} median GP solve {ms:9.3f} ms")
    print(f"log-log slope {res.slope:.2f} (90% CI {res.slope_ci[0]:.2f} .. {res.slope_ci[1]:.2f})")
    return EXIT_OK


COMMANDS = {
    "simulate-channel": cmd_simulate_channel, "solve-genie": cmd_solve_genie, "run": cmd_run,
    "campaign": cmd_campaign, "sweep-error": cmd_sweep_error, "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_default_config:
        print(format_config(PROFILES["paper"]), end="")
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ScenarioError, TableError, ChannelConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
