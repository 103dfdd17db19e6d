"""Calendar helpers.

Dates are stored as integer days since 1970-01-01 so that all date
arithmetic is integer-exact. Months are addressed by a single integer id,
``year * 12 + (month - 1)``, which makes month ranges and CPI lookups
plain integer arithmetic.
"""

from __future__ import annotations

import datetime as dt

import numpy as np
import pandas as pd

EPOCH = dt.date(1970, 1, 1)

#: Fieldwork window of the 2011-12 follow-up survey.
DEFAULT_WINDOW_ISO = ("2011-07-01", "2012-06-30")


def to_days(d: dt.date | str) -> int:
    """Convert a date (or ISO string) to integer days since the epoch."""
    if isinstance(d, str):
        d = dt.date.fromisoformat(d)
    return (d - EPOCH).days


def from_days(n: int) -> dt.date:
    return EPOCH + dt.timedelta(days=int(n))


def default_window() -> tuple[int, int]:
    return to_days(DEFAULT_WINDOW_ISO[0]), to_days(DEFAULT_WINDOW_ISO[1])


def year_of(days) -> np.ndarray:
    """Calendar year for each day count (vectorized; scalars stay 0-d)."""
    arr = np.asarray(days, dtype="int64")
    idx = pd.to_datetime(np.atleast_1d(arr), unit="D")
    return idx.year.to_numpy().reshape(arr.shape)


def month_id_of(days) -> np.ndarray:
    """Month id (year*12 + month-1) for each day count (vectorized)."""
    arr = np.asarray(days, dtype="int64")
    idx = pd.to_datetime(np.atleast_1d(arr), unit="D")
    mids = (idx.year.to_numpy() * 12 + idx.month.to_numpy() - 1).astype("int64")
    return mids.reshape(arr.shape)


def month_id(year: int, month: int) -> int:
    return year * 12 + (month - 1)


def parse_month(text: str) -> int:
    """Parse a ``YYYY-MM`` string into a month id."""
    year, month = text.split("-")
    return month_id(int(year), int(month))


def format_month(mid: int) -> str:
    year, month = divmod(int(mid), 12)
    return f"{year:04d}-{month + 1:02d}"


def month_ids_in(window: tuple[int, int]) -> np.ndarray:
    """All month ids touching the day window, in calendar order."""
    start, end = window
    first = month_id_of([start])[0]
    last = month_id_of([end])[0]
    return np.arange(first, last + 1, dtype="int64")


def month_start_days(mid):
    """Day count of the first day of each month id (scalar or array)."""
    mids = np.asarray(mid, dtype="int64")
    years, months = np.divmod(mids.ravel(), 12)
    stamps = pd.to_datetime(
        pd.DataFrame({"year": years, "month": months + 1, "day": 1})
    )
    days = ((stamps - pd.Timestamp(EPOCH)).dt.days).to_numpy().reshape(mids.shape)
    if days.ndim == 0:
        return int(days)
    return days
