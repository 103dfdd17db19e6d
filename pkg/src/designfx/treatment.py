"""Birth-year estimation, rollout-based treatment coding, placebo scrambling.

A rollout schedule says in which fiscal year each original district
adopted the program. Survey districts from a later round are linked to
original districts through a population-weighted concordance; a person
is coded treated when their estimated birth year reaches the threshold
year of their district's adoption.

Scrambling permutes the fiscal-year labels across districts while
preserving the number of districts adopting in each year, which is the
placebo device behind the design-effect diagnostics.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .dates import year_of
from .errors import SchemaError

logger = logging.getLogger(__name__)

DEFAULT_SD_THRESHOLD = 0.1
DEFAULT_THRESHOLD_OFFSET = 1


@dataclass(frozen=True)
class RolloutSchedule:
    """Adoption fiscal year per original district.

    ``districts`` are unique ids held in sorted order; ``years`` are the
    calendar years in which each district's adoption fiscal year starts
    (1985 stands for the 1985-86 fiscal year).
    """

    districts: np.ndarray
    years: np.ndarray

    def __post_init__(self):
        districts = np.asarray(self.districts, dtype=object).astype(str)
        years = np.asarray(self.years, dtype="int64")
        if districts.size != years.size:
            raise SchemaError("schedule districts and years differ in length")
        if districts.size == 0:
            raise SchemaError("schedule is empty")
        order = np.argsort(districts)
        districts = districts[order]
        if np.any(districts[1:] == districts[:-1]):
            dupes = sorted(set(districts[1:][districts[1:] == districts[:-1]]))
            raise SchemaError(f"duplicate district(s) in schedule: {dupes[:5]}")
        object.__setattr__(self, "districts", districts)
        object.__setattr__(self, "years", years[order])

    def __len__(self) -> int:
        return self.districts.size

    def year_map(self) -> dict:
        return dict(zip(self.districts.tolist(), self.years.tolist()))

    def year_counts(self) -> dict:
        """Histogram of adoption years, {year: n_districts}."""
        uniq, counts = np.unique(self.years, return_counts=True)
        return dict(zip(uniq.tolist(), counts.tolist()))

    @classmethod
    def from_csv(cls, path) -> "RolloutSchedule":
        frame = pd.read_csv(path, dtype=str)
        if frame.shape[1] < 2:
            raise SchemaError(f"schedule file {path} needs (district, fiscal-year-start) columns")
        years = pd.to_numeric(frame.iloc[:, 1], errors="raise").astype("int64")
        return cls(frame.iloc[:, 0].to_numpy(), years.to_numpy())

    def to_csv(self, path) -> None:
        pd.DataFrame({"district": self.districts, "fiscal_year_start": self.years}).to_csv(
            path, index=False
        )


@dataclass(frozen=True)
class Concordance:
    """Links follow-up survey districts to their original parents.

    A survey district can have several parents, each with a positive
    population weight. ``frame`` holds columns (district, parent, weight).
    """

    frame: pd.DataFrame

    def __post_init__(self):
        needed = ("district", "parent", "weight")
        missing = [c for c in needed if c not in self.frame.columns]
        if missing:
            raise SchemaError(f"concordance is missing column(s): {missing}")
        frame = self.frame.loc[:, list(needed)].copy()
        frame["district"] = frame["district"].astype(str)
        frame["parent"] = frame["parent"].astype(str)
        frame["weight"] = pd.to_numeric(frame["weight"], errors="raise").astype("float64")
        if not (frame["weight"] > 0).all():
            raise SchemaError("concordance weights must be positive")
        if len(frame) == 0:
            raise SchemaError("concordance is empty")
        frame = frame.sort_values(["district", "parent"], kind="mergesort").reset_index(drop=True)
        object.__setattr__(self, "frame", frame)

    def parents(self, district: str) -> tuple[np.ndarray, np.ndarray]:
        """(parent ids, weights) for one survey district; empty if unmapped."""
        sub = self.frame[self.frame["district"] == str(district)]
        return sub["parent"].to_numpy(), sub["weight"].to_numpy()

    def districts(self) -> np.ndarray:
        return self.frame["district"].unique()

    @classmethod
    def identity(cls, districts) -> "Concordance":
        """Each district is its own single parent with weight 1."""
        ids = np.unique(np.asarray(districts, dtype=object).astype(str))
        return cls(pd.DataFrame({"district": ids, "parent": ids, "weight": 1.0}))

    @classmethod
    def from_csv(cls, path) -> "Concordance":
        frame = pd.read_csv(path, dtype=str)
        if frame.shape[1] < 3:
            raise SchemaError(
                f"concordance file {path} needs (district, parent, weight) columns"
            )
        frame = frame.iloc[:, :3]
        frame.columns = ["district", "parent", "weight"]
        return cls(frame)

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False)


@dataclass(frozen=True)
class TreatmentAssignment:
    """Row-level treatment coding.

    ``treated`` is 1.0, 0.0 or NaN (missing); ``birth_year`` the estimated
    birth year; ``rollout_year`` the resolved adoption fiscal-year start
    (NaN where unresolved).
    """

    treated: np.ndarray
    birth_year: np.ndarray
    rollout_year: np.ndarray

    def __post_init__(self):
        if not (self.treated.size == self.birth_year.size == self.rollout_year.size):
            raise SchemaError("assignment arrays differ in length")

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.treated).sum())


def estimate_birth_year(interview_date, age_years):
    """Estimated birth year: calendar year of the interview minus completed age.

    Works elementwise on arrays of day counts and integer ages; scalars
    return a plain int.
    """
    days = np.asarray(interview_date, dtype="int64")
    ages = np.asarray(age_years, dtype="int64")
    if np.any(ages < 0):
        raise ValueError("age_years must be non-negative")
    out = year_of(days) - ages
    if out.ndim == 0:
        return int(out)
    return out


def _round_half_down(x: float) -> int:
    # nearest integer, exact .5 ties going down
    return int(math.ceil(x - 0.5))


def resolve_rollout_year(
    district: str,
    conc: Concordance,
    sched: RolloutSchedule,
    sd_threshold: float = DEFAULT_SD_THRESHOLD,
) -> int | None:
    """Adoption fiscal year of a survey district through its parents.

    Parents' adoption years are combined with population weights
    (normalized to sum 1). If the weighted standard deviation exceeds
    ``sd_threshold`` the parentage is judged mixed and None is returned;
    otherwise the weighted mean year, rounded to the nearest integer with
    exact ties rounding down. Unmapped districts and districts with a
    parent absent from the schedule also resolve to None, with a logged
    diagnostic.
    """
    parents, weights = conc.parents(district)
    if parents.size == 0:
        logger.info("district %s not mapped in concordance; treatment missing", district)
        return None
    ymap = sched.year_map()
    if any(p not in ymap for p in parents):
        logger.info("district %s has parent(s) missing from schedule; treatment missing", district)
        return None
    years = np.array([ymap[p] for p in parents], dtype="float64")
    w = weights / weights.sum()
    mean = float(w @ years)
    sd = math.sqrt(float(w @ (years - mean) ** 2))
    if sd > sd_threshold:
        return None
    return _round_half_down(mean)


def resolve_all(
    districts,
    conc: Concordance,
    sched: RolloutSchedule,
    sd_threshold: float = DEFAULT_SD_THRESHOLD,
) -> dict:
    """resolve_rollout_year for each unique district, as a dict."""
    uniq = np.unique(np.asarray(districts, dtype=object).astype(str))
    return {d: resolve_rollout_year(d, conc, sched, sd_threshold) for d in uniq}


def assign_treatment(
    table,
    sched: RolloutSchedule,
    conc: Concordance | None = None,
    *,
    sd_threshold: float = DEFAULT_SD_THRESHOLD,
    threshold_offset: int = DEFAULT_THRESHOLD_OFFSET,
) -> TreatmentAssignment:
    """Code every row of an observation table as treated/untreated/missing.

    Parameters
    ----------
    table : ObservationTable
        Needs district, interview_date and age_years columns.
    sched : RolloutSchedule
        Adoption fiscal years by original district.
    conc : Concordance, optional
        Survey-to-original district links; defaults to the identity
        mapping (survey ids are original ids).
    sd_threshold : float
        Mixed-parentage cutoff on the weighted SD of parent years.
    threshold_offset : int
        Treated iff birth year >= fiscal-year start + offset. The default
        1 makes a 1985-86 adopter's threshold 1986.

    Returns
    -------
    TreatmentAssignment
        treated in {1.0, 0.0, NaN}, plus birth and rollout years.
    """
    table.require(["district", "interview_date", "age_years"])
    districts = table.column("district")
    if conc is None:
        conc = Concordance.identity(districts)

    birth = estimate_birth_year(table.column("interview_date"), table.column("age_years"))
    resolved = resolve_all(districts, conc, sched, sd_threshold)

    rollout = np.array(
        [math.nan if resolved[d] is None else float(resolved[d]) for d in districts],
        dtype="float64",
    )
    threshold = rollout + threshold_offset
    treated = np.where(
        np.isnan(rollout), math.nan, (birth >= threshold).astype("float64")
    )
    return TreatmentAssignment(treated=treated, birth_year=birth, rollout_year=rollout)


def scramble_schedule(sched: RolloutSchedule, rng_seed) -> RolloutSchedule:
    """Permute adoption years across districts, preserving per-year counts.

    ``rng_seed`` may be an integer or a sequence of integers (so that
    replication k of a master seed uses the stream (master, k)). The
    permutation is drawn over the schedule's sorted district order,
    making the result independent of input row order.
    """
    rng = np.random.default_rng(rng_seed)
    perm = rng.permutation(sched.years.size)
    return RolloutSchedule(sched.districts.copy(), sched.years[perm])
