import dataclasses

import numpy as np
import pytest

from apass.config import PROFILES
from apass.campaign import build_trial
from apass.linkmodel import noise_variance

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance verdict line, printed in the terminal summary.

    ``passed=None`` records a skipped criterion.
    """

    def _report(criterion, passed, detail):
        verdict = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"[{verdict}] criterion {criterion}: {detail}")
        print(ACCEPTANCE_LINES[-1])

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def desk_config(n_users, n_slots, **campaign):
    base = PROFILES["desk"]
    return dataclasses.replace(
        base,
        system=dataclasses.replace(base.system, n_users=n_users, n_slots=n_slots),
        campaign=dataclasses.replace(base.campaign, **campaign),
    )


def desk_instance(n_users, n_slots, trial):
    """(realization, sigma2, p_total) of one desk-profile trial."""
    cfg = desk_config(n_users, n_slots)
    return build_trial(cfg, trial), noise_variance(cfg.noise()), cfg.system.eirp_w


def random_gains(rng, K, M, snr_db=(0.0, 30.0)):
    """Gains for unit noise and unit budget with per-entry SNR drawn in dB."""
    return 10 ** (rng.uniform(*snr_db, size=(K, M)) / 10)
