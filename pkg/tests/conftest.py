"""Shared fixtures and the acceptance-line reporter."""

import re

import numpy as np
import pandas as pd
import pytest

from designfx import DgpConfig, ObservationTable, RolloutSchedule, generate
from designfx.dates import default_window, to_days

_ACCEPTANCE_RE = re.compile(r"test_c(\d+)[a-z]?_(\w+)")


def pytest_runtest_logreport(report):
    """Print one PASS/FAIL line per acceptance criterion."""
    if "test_acceptance" not in report.nodeid:
        return
    m = _ACCEPTANCE_RE.search(report.nodeid)
    if not m:
        return
    if report.when == "call":
        status = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.skipped:
        status = "SKIP"
    else:
        return
    print(f"\nACCEPTANCE {status} criterion {int(m.group(1))}: {m.group(2)}")


def make_table(frame: pd.DataFrame, window=None) -> ObservationTable:
    return ObservationTable(frame, window=window or default_window())


@pytest.fixture
def small_table() -> ObservationTable:
    """Deterministic 12-row table over 3 districts."""
    win = default_window()
    rng = np.random.default_rng(7)
    n = 12
    frame = pd.DataFrame(
        {
            "person_id": [f"p{i}" for i in range(n)],
            "district": np.repeat(["A", "B", "C"], 4),
            "interview_date": rng.integers(win[0], win[1] + 1, size=n),
            "age_years": rng.integers(21, 27, size=n).astype("int64"),
            "log_wage": rng.normal(5.0, 0.3, size=n),
            "log_pce": rng.normal(7.0, 0.3, size=n),
            "weight": rng.uniform(0.5, 3.0, size=n),
        }
    )
    return ObservationTable(frame, sample_id="small", window=win)


@pytest.fixture
def small_schedule() -> RolloutSchedule:
    return RolloutSchedule(
        np.array(["A", "B", "C"]), np.array([1985, 1987, 1989], dtype="int64")
    )


@pytest.fixture
def trend_dgp():
    """One synthetic draw with a strong survey-time trend and no true effect."""
    cfg = DgpConfig(n_districts=30, n_per_district=40, drift=0.2, true_effect=0.0, seed=11)
    return generate(cfg)
