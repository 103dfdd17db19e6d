"""Placebo-rollout randomization: design effects, p-values, densities.

The diagnostic: scramble the adoption years across districts (keeping the
per-year counts), re-code treatment, re-estimate, and repeat. The mean of
the resulting estimates is the design effect, the part of the estimate
the research design produces on its own. A two-tailed randomization
p-value then asks how unusual the observed estimate is relative to that
placebo distribution.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data_model import ObservationTable
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateSampleError,
    EmptySupportError,
    PlaceboFailureError,
    RankDeficiencyError,
)
from .regression import RegressionSpec, estimate_spec
from .treatment import Concordance, RolloutSchedule, scramble_schedule

logger = logging.getLogger(__name__)

# estimation failures that count as a failed replication rather than a bug
_REPLICATION_ERRORS = (RankDeficiencyError, DegenerateSampleError, ConvergenceError)

FAILURE_CAP_SHARE = 0.01


@dataclass(frozen=True)
class PlaceboDistribution:
    """Estimates from K scrambled-schedule replications.

    ``estimates`` holds one treatment coefficient per successful
    replication, ordered by replication index (``replication_indices``
    records which of 1..K succeeded). ``design_effect`` is their mean.
    """

    estimates: np.ndarray
    replication_indices: np.ndarray
    master_seed: int
    K: int
    spec_hash: str
    failures: int

    def __post_init__(self):
        est = np.asarray(self.estimates, dtype="float64")
        idx = np.asarray(self.replication_indices, dtype="int64")
        if est.size != idx.size:
            raise ConfigError("estimates and replication indices differ in length")
        if est.size + self.failures != self.K:
            raise ConfigError("estimates + failures must equal the replication count")
        object.__setattr__(self, "estimates", est)
        object.__setattr__(self, "replication_indices", idx)

    @property
    def design_effect(self) -> float:
        return float(self.estimates.mean())

    def to_dict(self) -> dict:
        return {
            "design_effect": self.design_effect,
            "K": self.K,
            "failures": self.failures,
            "master_seed": self.master_seed,
            "spec_hash": self.spec_hash,
            "estimates": self.estimates.tolist(),
            "replication_indices": self.replication_indices.tolist(),
        }


def run_placebo(
    table: ObservationTable,
    spec: RegressionSpec,
    schedule: RolloutSchedule,
    concordance: Concordance | None = None,
    *,
    K: int,
    master_seed: int,
    threads: int = 1,
    sd_threshold: float | None = None,
    threshold_offset: int | None = None,
) -> PlaceboDistribution:
    """Estimate the spec under K scrambled rollout schedules.

    Replication k (1-based) scrambles with the RNG stream
    ``(master_seed, k)``, so the estimate vector is bit-identical at any
    thread count and the first K' replications of a longer run coincide
    with a shorter one. Replications that fail to estimate (an unlucky
    scramble can be rank deficient) are recorded and excluded from the
    mean; when failures exceed 1% of K the run aborts.

    Parameters
    ----------
    table, spec, schedule, concordance
        As in the estimation pipeline; the table is shared read-only.
    K : int
        Number of replications, >= 1.
    master_seed : int
        Root of all replication RNG streams.
    threads : int
        Worker threads; affects wall time only, never results.
    """
    if K < 1:
        raise ConfigError("placebo run needs K >= 1 replications")
    if threads < 1:
        raise ConfigError("threads must be >= 1")

    extra = {}
    if sd_threshold is not None:
        extra["sd_threshold"] = sd_threshold
    if threshold_offset is not None:
        extra["threshold_offset"] = threshold_offset

    # cohort depends on the schedule's year span, which scrambles preserve;
    # pin it so every replication restricts to the same rows
    if spec.cohort is None:
        offset = extra.get("threshold_offset", 1)
        lo = int(schedule.years.min()) + offset - 1
        hi = int(schedule.years.max()) + offset + 1
        spec = dataclasses.replace(spec, cohort=(lo, hi))

    deltas = np.full(K, np.nan, dtype="float64")
    failed = np.zeros(K, dtype=bool)

    def one(k: int) -> None:
        sched_k = scramble_schedule(schedule, [master_seed, k])
        try:
            fit = estimate_spec(table, spec, sched_k, concordance, **extra)
        except _REPLICATION_ERRORS as err:
            logger.info("replication %d failed: %s", k, err)
            failed[k - 1] = True
            return
        deltas[k - 1] = fit.delta

    if threads == 1:
        for k in range(1, K + 1):
            one(k)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, range(1, K + 1)))

    n_failures = int(failed.sum())
    if n_failures > FAILURE_CAP_SHARE * K:
        raise PlaceboFailureError(
            f"{n_failures} of {K} placebo replications failed to estimate "
            f"(cap is {FAILURE_CAP_SHARE:.0%})"
        )
    if n_failures == K:
        raise PlaceboFailureError("every placebo replication failed to estimate")

    ok = ~failed
    return PlaceboDistribution(
        estimates=deltas[ok],
        replication_indices=np.flatnonzero(ok) + 1,
        master_seed=master_seed,
        K=K,
        spec_hash=spec.spec_hash(),
        failures=n_failures,
    )


def two_tailed_p(dist: PlaceboDistribution, observed: float) -> float:
    """Randomization p-value for observed == design effect.

    Counts replications at least as far from the design effect as the
    observed estimate, with the add-one convention:
    p = (1 + #{k : |d_k - DE| >= |observed - DE|}) / (n + 1) over the n
    successful replications. Always in (0, 1]; exactly 1 when the
    observed estimate equals the design effect.
    """
    est = dist.estimates
    if est.size == 0:
        raise ConfigError("placebo distribution is empty")
    de = dist.design_effect
    dist_obs = abs(observed - de)
    count = int(np.sum(np.abs(est - de) >= dist_obs))
    return (1 + count) / (est.size + 1)


@dataclass(frozen=True)
class DensityCurve:
    """Kernel density of placebo estimates on an even grid."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    design_effect: float
    observed: float | None = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"estimate": self.grid, "density": self.density})

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

    def markers(self) -> dict:
        out = {"design_effect": self.design_effect, "bandwidth": self.bandwidth}
        if self.observed is not None:
            out["observed"] = self.observed
        return out


def _epanechnikov_bandwidth(x: np.ndarray) -> float:
    # Silverman-style plug-in with the Epanechnikov constant
    sd = float(x.std())
    q75, q25 = np.percentile(x, [75.0, 25.0], method="linear")
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.349) if iqr > 0 else sd
    return 2.34 * spread * x.size ** (-0.2)


def export_density(
    dist: PlaceboDistribution,
    *,
    grid: np.ndarray | None = None,
    n_points: int = 512,
    observed: float | None = None,
) -> DensityCurve:
    """Epanechnikov kernel density of the placebo estimates.

    ``grid`` defaults to an even grid of ``n_points`` spanning the data
    plus one bandwidth of margin. A supplied grid that does not overlap
    the data range raises :class:`EmptySupportError`. Degenerate
    distributions (zero spread) put all mass in the single grid cell
    containing the common value.
    """
    x = np.sort(dist.estimates)
    if x.size == 0:
        raise ConfigError("placebo distribution is empty")
    h = _epanechnikov_bandwidth(x)

    if grid is None:
        lo, hi = float(x[0]), float(x[-1])
        pad = h if h > 0 else max(abs(lo), 1.0) * 1e-3
        grid = np.linspace(lo - pad, hi + pad, n_points)
    else:
        grid = np.asarray(grid, dtype="float64")
        if grid.size < 2:
            raise ConfigError("density grid needs at least 2 points")
        if grid[0] > x[-1] or grid[-1] < x[0]:
            raise EmptySupportError(
                f"density grid [{grid[0]:g}, {grid[-1]:g}] does not overlap "
                f"the estimate range [{x[0]:g}, {x[-1]:g}]"
            )

    density = np.zeros(grid.size, dtype="float64")
    if x[-1] - x[0] == 0.0:
        # degenerate spread: all mass in the nearest grid cell
        h = 0.0
        cell = float(grid[1] - grid[0])
        j = int(np.argmin(np.abs(grid - x[0])))
        density[j] = 1.0 / cell
    else:
        for j, g in enumerate(grid):
            a = np.searchsorted(x, g - h, side="left")
            b = np.searchsorted(x, g + h, side="right")
            if a == b:
                continue
            u = (x[a:b] - g) / h
            density[j] = 0.75 * np.sum(1.0 - u * u) / (x.size * h)

    return DensityCurve(
        grid=grid,
        density=density,
        bandwidth=h,
        design_effect=dist.design_effect,
        observed=observed,
    )
