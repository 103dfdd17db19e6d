import datetime as dt

import numpy as np

from designfx.dates import (
    default_window,
    format_month,
    from_days,
    month_id,
    month_id_of,
    month_ids_in,
    month_start_days,
    parse_month,
    to_days,
    year_of,
)


def test_day_roundtrip():
    for iso in ("1970-01-01", "1985-04-01", "2011-07-01", "2012-06-30"):
        d = dt.date.fromisoformat(iso)
        assert from_days(to_days(d)) == d
        assert to_days(iso) == to_days(d)


def test_default_window_spans_twelve_months():
    lo, hi = default_window()
    assert from_days(lo) == dt.date(2011, 7, 1)
    assert from_days(hi) == dt.date(2012, 6, 30)
    assert len(month_ids_in((lo, hi))) == 12


def test_year_and_month_of():
    days = np.array([to_days("2011-12-31"), to_days("2012-01-01")])
    assert year_of(days).tolist() == [2011, 2012]
    mids = month_id_of(days)
    assert mids.tolist() == [month_id(2011, 12), month_id(2012, 1)]
    assert mids[1] - mids[0] == 1


def test_month_parse_format_roundtrip():
    for text in ("2011-07", "2012-06", "1985-04"):
        assert format_month(parse_month(text)) == text


def test_month_start_days_scalar_and_vector():
    mid = parse_month("2011-07")
    assert from_days(month_start_days(mid)) == dt.date(2011, 7, 1)
    mids = np.array([parse_month("2011-07"), parse_month("2012-06")])
    starts = month_start_days(mids)
    assert from_days(int(starts[0])) == dt.date(2011, 7, 1)
    assert from_days(int(starts[1])) == dt.date(2012, 6, 1)
