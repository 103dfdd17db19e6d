"""Survey-time diagnostics: smoothed trajectories and linear trends.

Because age is recorded in completed years, the estimated birth year of a
fixed-age respondent climbs over the fieldwork year, so the share coded
treated drifts upward in survey time. These helpers trace how outcomes
and the treated share move over the fieldwork window, and compare birth
cohorts that should be affected with ones too old to be.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data_model import ObservationTable
from .dates import from_days
from .errors import ConfigError, DegenerateSampleError
from .treatment import (
    DEFAULT_SD_THRESHOLD,
    DEFAULT_THRESHOLD_OFFSET,
    Concordance,
    RolloutSchedule,
    assign_treatment,
)

logger = logging.getLogger(__name__)

DEFAULT_BANDWIDTH_DAYS = 30.0
WINDOW_DAYS = 365.0

TREATED_FRACTION = "treated_fraction"
DEFAULT_VARIABLES = (TREATED_FRACTION, "log_wage", "log_pce")


@dataclass(frozen=True)
class TrendFit:
    """Least-squares line through (days since window start, value).

    ``slope`` and ``stderr`` are expressed as change over a 365-day
    window, not per day.
    """

    slope: float
    intercept: float
    stderr: float
    n: int

    @property
    def slope_per_day(self) -> float:
        return self.slope / WINDOW_DAYS

    def to_dict(self) -> dict:
        return {
            "slope_per_window": self.slope,
            "intercept": self.intercept,
            "stderr_per_window": self.stderr,
            "n": self.n,
        }


@dataclass(frozen=True)
class TrendCurve:
    """A smoothed trajectory over the survey window.

    ``grid`` holds daily day counts; ``smoothed`` the local average at
    each grid date (NaN where no observation falls within one bandwidth);
    ``n_effective`` how many observations carried positive kernel weight
    there. ``fit`` is the straight-line trend through the raw points,
    or None when too few distinct dates exist to fit one.
    """

    grid: np.ndarray
    smoothed: np.ndarray
    n_effective: np.ndarray
    bandwidth_days: float
    fit: TrendFit | None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "date": [from_days(int(d)).isoformat() for d in self.grid],
                "smoothed": self.smoothed,
                "n_effective": self.n_effective,
            }
        )

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def _epanechnikov(u: np.ndarray) -> np.ndarray:
    return 0.75 * (1.0 - u * u)


def kernel_smooth(
    dates,
    values,
    bandwidth_days: float = DEFAULT_BANDWIDTH_DAYS,
    *,
    window: tuple[int, int] | None = None,
) -> TrendCurve:
    """Epanechnikov moving average of values over calendar time.

    Nadaraya-Watson estimate on a daily grid: at grid date g the value is
    sum(K(u) * y) / sum(K(u)) with u = (date - g) / bandwidth and
    K(u) = 0.75 (1 - u^2) on |u| <= 1. Unweighted. Near the window edges
    the kernel is truncated to the available data, which the normalizing
    denominator handles by construction. Grid dates with zero kernel mass
    get NaN.

    Parameters
    ----------
    dates : array of int
        Day counts of each observation.
    values : array of float
        Observed values, same length; NaN entries are dropped.
    bandwidth_days : float
        Kernel half-width, > 0.
    window : (int, int), optional
        Grid span; defaults to the span of the data.
    """
    if not bandwidth_days > 0:
        raise ConfigError("bandwidth must be positive")
    d = np.asarray(dates, dtype="float64")
    y = np.asarray(values, dtype="float64")
    if d.size != y.size:
        raise ConfigError("dates and values differ in length")
    ok = ~np.isnan(y)
    d, y = d[ok], y[ok]
    if d.size == 0:
        raise DegenerateSampleError("no observations to smooth")

    if window is None:
        lo, hi = int(d.min()), int(d.max())
    else:
        lo, hi = int(window[0]), int(window[1])
    grid = np.arange(lo, hi + 1, dtype="int64")

    order = np.argsort(d, kind="stable")
    ds, ys = d[order], y[order]

    smoothed = np.full(grid.size, np.nan, dtype="float64")
    n_eff = np.zeros(grid.size, dtype="int64")
    for j, g in enumerate(grid):
        a = np.searchsorted(ds, g - bandwidth_days, side="left")
        b = np.searchsorted(ds, g + bandwidth_days, side="right")
        if a == b:
            continue
        u = (ds[a:b] - g) / bandwidth_days
        k = _epanechnikov(u)
        mass = k.sum()
        if mass <= 0.0:
            continue
        smoothed[j] = float(k @ ys[a:b] / mass)
        n_eff[j] = int(np.count_nonzero(k > 0.0))

    try:
        fit = linear_trend(d, y, window=(lo, hi))
    except DegenerateSampleError:
        fit = None
    return TrendCurve(
        grid=grid,
        smoothed=smoothed,
        n_effective=n_eff,
        bandwidth_days=float(bandwidth_days),
        fit=fit,
    )


def linear_trend(dates, values, *, window: tuple[int, int] | None = None) -> TrendFit:
    """OLS of value on days since the window start.

    The slope (and its conventional standard error) are scaled to change
    over a 365-day window. The intercept is the fitted value at the
    window start. Needs at least two distinct dates.
    """
    d = np.asarray(dates, dtype="float64")
    y = np.asarray(values, dtype="float64")
    ok = ~np.isnan(y)
    d, y = d[ok], y[ok]
    if d.size < 2:
        raise DegenerateSampleError("linear trend needs at least 2 observations")
    start = float(window[0]) if window is not None else float(d.min())
    x = d - start
    if np.all(x == x[0]):
        raise DegenerateSampleError("linear trend needs at least 2 distinct dates")

    xbar = x.mean()
    ybar = y.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope_day = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    intercept = ybar - slope_day * xbar
    resid = y - intercept - slope_day * x
    n = x.size
    if n > 2:
        sigma2 = float(resid @ resid) / (n - 2)
        se_day = float(np.sqrt(sigma2 / sxx))
    else:
        se_day = 0.0
    return TrendFit(
        slope=slope_day * WINDOW_DAYS,
        intercept=intercept,
        stderr=se_day * WINDOW_DAYS,
        n=int(n),
    )


@dataclass(frozen=True)
class CohortComparison:
    """Per-cohort trajectories for the treated share and outcomes.

    ``curves`` maps (cohort name, variable) to a :class:`TrendCurve`.
    ``slope_deltas`` maps each variable to the window-slope difference
    between the first two cohorts (first minus second) when at least two
    cohorts were compared.
    """

    cohorts: dict
    variables: tuple[str, ...]
    curves: dict
    slope_deltas: dict

    def curve(self, cohort: str, variable: str) -> TrendCurve:
        return self.curves[(cohort, variable)]

    def fit(self, cohort: str, variable: str) -> TrendFit:
        return self.curves[(cohort, variable)].fit


def cohort_compare(
    table: ObservationTable,
    cohorts: dict,
    schedule: RolloutSchedule,
    concordance: Concordance | None = None,
    *,
    variables: tuple[str, ...] = DEFAULT_VARIABLES,
    bandwidth_days: float = DEFAULT_BANDWIDTH_DAYS,
    sd_threshold: float = DEFAULT_SD_THRESHOLD,
    threshold_offset: int = DEFAULT_THRESHOLD_OFFSET,
) -> CohortComparison:
    """Smooth each variable over survey time within each birth cohort.

    Parameters
    ----------
    table : ObservationTable
    cohorts : dict
        Maps cohort name to an inclusive (first, last) birth-year range;
        ranges must be disjoint and each must contain data.
    schedule, concordance
        Rollout inputs for the treated-share variable.
    variables : tuple of str
        ``"treated_fraction"`` plus outcome column names present in the
        table (absent outcome columns are skipped with a note).
    """
    if not cohorts:
        raise ConfigError("no cohorts given")
    ranges = list(cohorts.items())
    for name, (lo, hi) in ranges:
        if lo > hi:
            raise ConfigError(f"cohort {name!r} range is inverted")
    for i in range(len(ranges)):
        for j in range(i + 1, len(ranges)):
            (_, (lo1, hi1)), (_, (lo2, hi2)) = ranges[i], ranges[j]
            if lo1 <= hi2 and lo2 <= hi1:
                raise ConfigError(
                    f"cohorts {ranges[i][0]!r} and {ranges[j][0]!r} overlap"
                )

    assignment = assign_treatment(
        table,
        schedule,
        concordance,
        sd_threshold=sd_threshold,
        threshold_offset=threshold_offset,
    )
    dates = table.column("interview_date")
    birth = assignment.birth_year

    used_vars = []
    for var in variables:
        if var == TREATED_FRACTION or var in table.frame.columns:
            used_vars.append(var)
        else:
            logger.info("variable %r not in table; skipped", var)
    if not used_vars:
        raise ConfigError("none of the requested variables are available")

    curves: dict = {}
    for name, (lo, hi) in ranges:
        mask = (birth >= lo) & (birth <= hi)
        if not mask.any():
            raise DegenerateSampleError(f"cohort {name!r} ({lo}-{hi}) has no rows")
        for var in used_vars:
            values = assignment.treated if var == TREATED_FRACTION else table.column(var)
            curves[(name, var)] = kernel_smooth(
                dates[mask],
                np.asarray(values, dtype="float64")[mask],
                bandwidth_days,
                window=table.window,
            )

    slope_deltas: dict = {}
    if len(ranges) >= 2:
        first, second = ranges[0][0], ranges[1][0]
        for var in used_vars:
            fit_a, fit_b = curves[(first, var)].fit, curves[(second, var)].fit
            slope_deltas[var] = (
                fit_a.slope - fit_b.slope
                if fit_a is not None and fit_b is not None
                else float("nan")
            )

    return CohortComparison(
        cohorts=dict(cohorts),
        variables=tuple(used_vars),
        curves=curves,
        slope_deltas=slope_deltas,
    )
