"""Desk-scale synthetic data with the design's confounding channel built in.

The generator mimics the setting the diagnostics are for: a program rolls
out across districts over several fiscal years, a survey interviews
people over a rolling 12-month window two decades later, and age is
recorded in completed years. Because estimated birth year is interview
year minus age, respondents of the same age interviewed later in the
fieldwork get later estimated birth years and are more often coded
treated. An
outcome drift in interview time (inflation, growth, fieldwork sequencing)
then loads onto the treatment coefficient of a birth-cohort design even
when the true effect is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data_model import ObservationTable
from .dates import default_window, month_ids_in, month_start_days, year_of
from .errors import ConfigError
from .treatment import Concordance, RolloutSchedule

# the default adoption path interpolates 31 -> 466 districts geometrically
ROLLOUT_START_COUNT = 31
ROLLOUT_END_COUNT = 466
ROLLOUT_YEARS = 5

INTERVIEW_PROCESSES = ("uniform", "sequenced-by-district")

DAYS_PER_YEAR = 365.2425


def default_adoption_counts(n_districts: int, n_years: int = ROLLOUT_YEARS) -> tuple[int, ...]:
    """Split districts over adoption years like the historical expansion.

    The cumulative count grows geometrically from 31 to 466 over five
    fiscal years; the yearly increments, rescaled to ``n_districts``, are
    rounded by largest remainder (ties to earlier years) so they sum
    exactly to ``n_districts``.
    """
    if n_districts < 1:
        raise ConfigError("need at least 1 district")
    if n_years < 1:
        raise ConfigError("need at least 1 adoption year")
    ratio = (ROLLOUT_END_COUNT / ROLLOUT_START_COUNT) ** (1.0 / max(n_years - 1, 1))
    cumulative = np.array([ROLLOUT_START_COUNT * ratio**i for i in range(n_years)])
    increments = np.diff(cumulative, prepend=0.0)
    shares = increments / increments.sum()
    raw = shares * n_districts
    counts = np.floor(raw).astype("int64")
    remainder = int(n_districts - counts.sum())
    if remainder > 0:
        frac = raw - counts
        # stable order: biggest fraction first, earlier year on ties
        order = np.lexsort((np.arange(n_years), -frac))
        counts[order[:remainder]] += 1
    return tuple(int(c) for c in counts)


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of the synthetic process.

    ``true_effect`` is the causal effect of actual exposure;``drift`` is
    the outcome trend per 365 days of interview time. ``age_profile`` is
    either a slope per year of age or a sequence of per-age offsets
    covering the age range. ``interview_process`` is ``uniform`` (dates
    uniform over the window) or ``sequenced-by-district`` (each district
    is surveyed within one random fieldwork month).
    """

    n_districts: int = 100
    n_per_district: int = 50
    adoption_counts: tuple[int, ...] | None = None
    start_year: int = 1985
    window: tuple[int, int] = field(default_factory=default_window)
    age_range: tuple[int, int] = (21, 26)
    true_effect: float = 0.0
    drift: float = 0.0
    district_sd: float = 0.1
    age_profile: float | tuple[float, ...] = 0.0
    noise_sd: float = 0.1
    interview_process: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.n_districts < 1 or self.n_per_district < 1:
            raise ConfigError("n_districts and n_per_district must be >= 1")
        if self.adoption_counts is not None:
            counts = tuple(int(c) for c in self.adoption_counts)
            if any(c < 0 for c in counts):
                raise ConfigError("adoption counts must be non-negative")
            if sum(counts) != self.n_districts:
                raise ConfigError(
                    f"adoption counts sum to {sum(counts)}, not n_districts={self.n_districts}"
                )
            object.__setattr__(self, "adoption_counts", counts)
        if self.window[0] > self.window[1]:
            raise ConfigError("window is inverted")
        lo, hi = self.age_range
        if lo < 0 or lo > hi:
            raise ConfigError(f"bad age range {self.age_range!r}")
        if self.district_sd < 0 or self.noise_sd < 0:
            raise ConfigError("standard deviations must be >= 0")
        if self.interview_process not in INTERVIEW_PROCESSES:
            raise ConfigError(
                f"unknown interview process {self.interview_process!r}; "
                f"expected one of {INTERVIEW_PROCESSES}"
            )
        if not isinstance(self.age_profile, (int, float)):
            profile = tuple(float(v) for v in self.age_profile)
            if len(profile) != hi - lo + 1:
                raise ConfigError(
                    f"age profile needs {hi - lo + 1} entries for ages {lo}..{hi}"
                )
            object.__setattr__(self, "age_profile", profile)


def _completed_age(interview_days: np.ndarray, birth_days: np.ndarray) -> np.ndarray:
    iv = pd.to_datetime(interview_days, unit="D")
    bd = pd.to_datetime(birth_days, unit="D")
    years = iv.year.to_numpy() - bd.year.to_numpy()
    before_birthday = (iv.month.to_numpy() * 100 + iv.day.to_numpy()) < (
        bd.month.to_numpy() * 100 + bd.day.to_numpy()
    )
    return (years - before_birthday.astype("int64")).astype("int64")


def _interview_dates(config: DgpConfig, district_index: np.ndarray, rng) -> np.ndarray:
    lo, hi = config.window
    if config.interview_process == "uniform":
        return rng.integers(lo, hi + 1, size=district_index.size).astype("int64")
    # one fieldwork month per district
    months = month_ids_in(config.window)
    per_district_month = rng.integers(0, months.size, size=config.n_districts)
    month_ids = months[per_district_month[district_index]]
    starts = np.maximum(month_start_days(month_ids), lo)
    ends = np.minimum(month_start_days(month_ids + 1) - 1, hi)
    return (starts + rng.random(district_index.size) * (ends - starts + 1)).astype("int64")


def _age_effect(config: DgpConfig, ages: np.ndarray) -> np.ndarray:
    lo, hi = config.age_range
    if isinstance(config.age_profile, tuple):
        offsets = np.asarray(config.age_profile, dtype="float64")
        idx = np.clip(ages - lo, 0, offsets.size - 1)
        return offsets[idx]
    return float(config.age_profile) * (ages - lo)


def generate(config: DgpConfig) -> tuple[ObservationTable, RolloutSchedule, Concordance]:
    """Draw one synthetic dataset.

    Returns the observation table, the true rollout schedule and an
    identity concordance, in the same shapes the CSV loaders produce, so
    synthetic and real data share every downstream code path.

    The outcome construction is
    district effect + age profile + drift * days/365 + effect * exposed + noise,
    where ``exposed`` uses the true birth year against the district's
    true threshold. Both ``log_wage`` and ``log_pce`` follow this with
    independent noise draws.
    """
    rng = np.random.default_rng(config.seed)
    n_d = config.n_districts
    n_rows = n_d * config.n_per_district

    width = max(3, len(str(n_d)))
    districts = np.array([f"D{i + 1:0{width}d}" for i in range(n_d)])

    counts = (
        config.adoption_counts
        if config.adoption_counts is not None
        else default_adoption_counts(n_d)
    )
    years_pool = np.repeat(
        np.arange(config.start_year, config.start_year + len(counts), dtype="int64"),
        counts,
    )
    schedule = RolloutSchedule(districts, years_pool[rng.permutation(n_d)])

    district_index = np.repeat(np.arange(n_d), config.n_per_district)
    interview = _interview_dates(config, district_index, rng)

    age_lo, age_hi = config.age_range
    exact_age = age_lo + rng.random(n_rows) * (age_hi - age_lo + 1)
    birth_days = interview - np.round(exact_age * DAYS_PER_YEAR).astype("int64")
    age_years = _completed_age(interview, birth_days)

    # true exposure: actual birth year against the district's threshold
    year_by_district = schedule.year_map()
    thresholds = np.array(
        [year_by_district[d] + 1 for d in districts], dtype="int64"
    )[district_index]
    true_birth_year = year_of(birth_days)
    exposed = (true_birth_year >= thresholds).astype("float64")

    district_effect = rng.normal(0.0, config.district_sd, size=n_d)[district_index]
    structural = (
        district_effect
        + _age_effect(config, age_years)
        + config.drift * (interview - config.window[0]) / 365.0
        + config.true_effect * exposed
    )
    log_wage = structural + rng.normal(0.0, config.noise_sd, size=n_rows)
    log_pce = structural + rng.normal(0.0, config.noise_sd, size=n_rows)

    weight = np.exp(rng.normal(0.0, 0.5, size=n_rows))

    frame = pd.DataFrame(
        {
            "person_id": [f"P{i + 1:07d}" for i in range(n_rows)],
            "district": districts[district_index],
            "interview_date": interview,
            "age_years": age_years,
            "log_wage": log_wage,
            "log_pce": log_pce,
            "weight": weight,
        }
    )
    table = ObservationTable(
        frame, sample_id=f"synthetic-{config.seed}", window=config.window
    )
    return table, schedule, Concordance.identity(districts)
