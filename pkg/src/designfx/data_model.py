"""Columnar observation tables: CSV ingestion, weight trimming, CPI deflation.

The canonical column names used throughout the package are:

========== =====================================================
column     meaning
========== =====================================================
person_id  opaque row identifier (string)
district   follow-up-survey district code (string)
interview_date  integer days since 1970-01-01
age_years  completed years of age on the interview day
log_wage   log nominal wage (NaN = not observed)
log_pce    log nominal per-capita monthly expenditure (NaN = not observed)
weight     positive survey multiplier
========== =====================================================

Any further columns are carried through untouched and can be used as
controls or fixed-effect groupings. Missing outcome values are explicit
NaN cells; every regression draws its own complete-case sample.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dates import default_window, from_days, month_id_of, parse_month, to_days
from .errors import CpiCoverageError, SchemaError

logger = logging.getLogger(__name__)

REQUIRED_ROLES = ("district", "interview_date", "age_years", "weight")
OUTCOME_ROLES = ("log_wage", "log_pce")

WEIGHT_MODES = ("none", "raw", "trimmed")


@dataclass(frozen=True)
class WeightPolicy:
    """How survey weights enter a regression.

    ``none`` ignores the weights (all ones), ``raw`` uses them as supplied,
    and ``trimmed`` caps them at median + ``trim_multiplier`` * IQR, the
    cap being computed on the estimation sample at hand. Quantiles use
    linear interpolation between closest ranks.
    """

    mode: str = "none"
    trim_multiplier: float = 5.0

    def __post_init__(self):
        if self.mode not in WEIGHT_MODES:
            raise SchemaError(f"unknown weight mode {self.mode!r}; expected one of {WEIGHT_MODES}")
        if not self.trim_multiplier > 0:
            raise SchemaError("trim_multiplier must be > 0")


@dataclass(frozen=True)
class CpiSeries:
    """Consumer price index by calendar month.

    ``months`` are contiguous month ids and ``values`` the matching index
    levels. ``base_month`` defaults to the first month of the series; any
    base only shifts log outcomes by a constant, which the fixed effects
    absorb, so a fixed choice keeps outputs reproducible.
    """

    months: np.ndarray
    values: np.ndarray
    base_month: int = -1

    def __post_init__(self):
        months = np.asarray(self.months, dtype="int64")
        values = np.asarray(self.values, dtype="float64")
        if months.size == 0:
            raise SchemaError("CPI series is empty")
        if months.size != values.size:
            raise SchemaError("CPI months and values differ in length")
        if not np.all(np.diff(months) == 1):
            raise SchemaError("CPI months must be contiguous and ordered")
        if not np.all(values > 0):
            raise SchemaError("CPI index values must be positive")
        object.__setattr__(self, "months", months)
        object.__setattr__(self, "values", values)
        if self.base_month < 0:
            object.__setattr__(self, "base_month", int(months[0]))
        elif not months[0] <= self.base_month <= months[-1]:
            raise SchemaError("CPI base month lies outside the series")

    def level(self, month_ids) -> np.ndarray:
        mids = np.asarray(month_ids, dtype="int64")
        lo, hi = int(self.months[0]), int(self.months[-1])
        bad = (mids < lo) | (mids > hi)
        if bad.any():
            raise CpiCoverageError(
                f"{int(bad.sum())} date(s) outside CPI coverage "
                f"[{lo}, {hi}] (month ids)"
            )
        return self.values[mids - lo]

    def log_ratio(self, month_ids) -> np.ndarray:
        """ln(CPI(month) / CPI(base)) for each monthid."""
        base = self.values[self.base_month - int(self.months[0])]
        return np.log(self.level(month_ids) / base)

    @classmethod
    def from_csv(cls, path, base_month: int | None = None) -> "CpiSeries":
        """Load a two-column (YYYY-MM, value) CSV."""
        frame = pd.read_csv(path, header=0, dtype=str)
        if frame.shape[1] < 2:
            raise SchemaError(f"CPI file {path} needs two columns (YYYY-MM, value)")
        months = np.array([parse_month(m) for m in frame.iloc[:, 0]], dtype="int64")
        values = pd.to_numeric(frame.iloc[:, 1], errors="raise").to_numpy(dtype="float64")
        order = np.argsort(months)
        return cls(months[order], values[order], base_month if base_month is not None else -1)

    def to_csv(self, path) -> None:
        from .dates import format_month

        frame = pd.DataFrame(
            {"month": [format_month(m) for m in self.months], "cpi": self.values}
        )
        frame.to_csv(path, index=False)

    @classmethod
    def constant(cls, window: tuple[int, int], value: float = 100.0) -> "CpiSeries":
        mids = month_id_of(np.array(window, dtype="int64"))
        months = np.arange(mids[0], mids[1] + 1, dtype="int64")
        return cls(months, np.full(months.size, value))


@dataclass(frozen=True)
class ObservationTable:
    """Immutable columnar micro-data.

    Wraps a pandas frame using the canonical column names above. The
    frame is shared, not copied; treat it as read-only. Loading and
    generation validate invariants once, so downstream code can rely on
    positive weights and in-window interview dates.
    """

    frame: pd.DataFrame
    sample_id: str = "sample"
    window: tuple[int, int] = field(default_factory=default_window)
    n_rejected: int = 0

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def columns(self) -> list[str]:
        return list(self.frame.columns)

    def column(self, name: str) -> np.ndarray:
        if name not in self.frame.columns:
            raise SchemaError(f"table {self.sample_id!r} has no column {name!r}")
        return self.frame[name].to_numpy()

    def require(self, names) -> None:
        missing = [n for n in names if n not in self.frame.columns]
        if missing:
            raise SchemaError(
                f"table {self.sample_id!r} is missing required column(s): {', '.join(missing)}"
            )

    def with_columns(self, **cols) -> "ObservationTable":
        """New table with extra/replaced columns (the frame is copied)."""
        frame = self.frame.copy()
        for name, values in cols.items():
            frame[name] = values
        return ObservationTable(frame, self.sample_id, self.window, self.n_rejected)

    def to_csv(self, path) -> None:
        """Write the canonical CSV form (dates back in ISO)."""
        out = self.frame.copy()
        out["interview_date"] = [from_days(d).isoformat() for d in out["interview_date"]]
        out.to_csv(path, index=False)


def _coerce_numeric(series: pd.Series) -> pd.Series:
    return pd.to_numeric(series, errors="coerce")


def load_observations(
    path,
    schema: dict | None = None,
    *,
    window: tuple[int, int] | None = None,
    sample_id: str | None = None,
) -> ObservationTable:
    """Read a CSV extract into an :class:`ObservationTable`.

    Parameters
    ----------
    path : str or Path
        CSV file with a header row (UTF-8).
    schema : dict, optional
        Maps canonical roles to source column names. ``district``,
        ``interview_date``, ``age_years`` and ``weight`` are required;
        ``person_id``, ``log_wage`` and ``log_pce`` are optional, as is
        ``controls``, a list of extra columns to carry through under
        their own names. When omitted, columns are taken under their
        canonical names (outcomes and person_id only if present).
    window : (int, int), optional
        Survey window in day counts; defaults to 2011-07-01 .. 2012-06-30.
        Rows interviewed outside the window are rejected.
    sample_id : str, optional
        Label for the table; defaults to the file stem.

    Rows whose required fields do not parse (bad date, non-numeric age or
    weight, weight <= 0, negative age, out-of-window date) are excluded;
    the count is logged and kept on the returned table.
    """
    window = window if window is not None else default_window()
    raw = pd.read_csv(path, dtype=str, keep_default_na=True)
    if raw.shape[0] == 0:
        raise SchemaError(f"{path}: no data rows")

    if schema is None:
        schema = {role: role for role in REQUIRED_ROLES}
        for role in OUTCOME_ROLES + ("person_id",):
            if role in raw.columns:
                schema[role] = role

    missing = [role for role in REQUIRED_ROLES if schema.get(role) not in raw.columns]
    if missing:
        raise SchemaError(
            f"{path}: schema maps required role(s) {missing} to columns "
            f"not present in the file (available: {list(raw.columns)})"
        )

    out = pd.DataFrame(index=raw.index)
    out["district"] = raw[schema["district"]].astype(str)

    parsed_dates = pd.to_datetime(raw[schema["interview_date"]], errors="coerce", format="ISO8601")
    day_counts = (parsed_dates - pd.Timestamp("1970-01-01")).dt.days
    out["interview_date"] = day_counts

    out["age_years"] = _coerce_numeric(raw[schema["age_years"]])
    out["weight"] = _coerce_numeric(raw[schema["weight"]])

    for role in OUTCOME_ROLES:
        source = schema.get(role)
        if source is not None:
            if source not in raw.columns:
                raise SchemaError(f"{path}: outcome column {source!r} not in file")
            out[role] = _coerce_numeric(raw[source])

    if schema.get("person_id") is not None:
        pid = schema["person_id"]
        if pid not in raw.columns:
            raise SchemaError(f"{path}: person_id column {pid!r} not in file")
        out.insert(0, "person_id", raw[pid].astype(str))
    else:
        out.insert(0, "person_id", raw.index.astype(str))

    for extra in schema.get("controls", ()):
        if extra not in raw.columns:
            raise SchemaError(f"{path}: control column {extra!r} not in file")
        coerced = _coerce_numeric(raw[extra])
        # keep non-numeric controls as categorical strings
        out[extra] = coerced if coerced.notna().any() else raw[extra].astype(str)

    ok = (
        out["interview_date"].notna()
        & out["age_years"].notna()
        & out["weight"].notna()
        & out["district"].str.len().gt(0)
    )
    ok &= out["interview_date"].between(window[0], window[1])
    ok &= out["weight"] > 0
    ok &= out["age_years"] >= 0

    n_rejected = int((~ok).sum())
    if n_rejected:
        logger.info("%s: excluded %d unparseable/out-of-window row(s)", path, n_rejected)
    kept = out[ok.to_numpy()].reset_index(drop=True)
    if len(kept) == 0:
        raise SchemaError(f"{path}: zero parseable rows")

    kept["interview_date"] = kept["interview_date"].astype("int64")
    kept["age_years"] = kept["age_years"].astype("int64")
    kept["weight"] = kept["weight"].astype("float64")

    name = sample_id if sample_id is not None else str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return ObservationTable(kept, sample_id=name, window=window, n_rejected=n_rejected)


def trim_weights(weights, policy: WeightPolicy) -> np.ndarray:
    """Apply a weight policy to a vector of positive survey weights.

    ``trimmed`` caps each weight at median + trim_multiplier * IQR
    (quantiles by linear interpolation between closest ranks), ``raw``
    returns a copy unchanged, ``none`` returns unit weights. Order is
    preserved and the operation is idempotent.
    """
    w = np.asarray(weights, dtype="float64")
    if w.size == 0:
        raise ValueError("weights must be non-empty")
    if not np.all(w > 0):
        raise ValueError("weights must all be positive")
    if policy.mode == "none":
        return np.ones_like(w)
    if policy.mode == "raw":
        return w.copy()
    q25, q50, q75 = np.percentile(w, [25.0, 50.0, 75.0], method="linear")
    cap = q50 + policy.trim_multiplier * (q75 - q25)
    return np.minimum(w, cap)


def deflate(values, dates, cpi: CpiSeries) -> np.ndarray:
    """Convert log nominal outcomes to log real outcomes.

    Subtracts ln(CPI(month of date) / CPI(base month)) from each value.
    Raises :class:`CpiCoverageError` if any date's month is not covered.
    """
    values = np.asarray(values, dtype="float64")
    adjustment = cpi.log_ratio(month_id_of(dates))
    return values - adjustment


def reflate(values, dates, cpi: CpiSeries) -> np.ndarray:
    """Inverse of :func:`deflate`."""
    values = np.asarray(values, dtype="float64")
    return values + cpi.log_ratio(month_id_of(dates))


def weight_cap(weights, trim_multiplier: float = 5.0) -> float:
    """The trimming cap, exposed for diagnostics."""
    w = np.asarray(weights, dtype="float64")
    q25, q50, q75 = np.percentile(w, [25.0, 50.0, 75.0], method="linear")
    return float(q50 + trim_multiplier * (q75 - q25))


def _nan_share(values) -> float:
    values = np.asarray(values, dtype="float64")
    return float(np.isnan(values).mean()) if values.size else math.nan
