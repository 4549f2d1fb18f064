import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glucoscope.cgm_data import (
    GlucoseSeries,
    detect_gaps,
    format_timestamp,
    parse_cgm_csv,
    parse_timestamp,
    read_cgm_csv,
    resample,
    serialize_cgm_csv,
    write_cgm_csv,
)
from glucoscope.errors import DuplicateTimestamp, EmptySeries, MalformedRow, PreconditionError

T0 = parse_timestamp("2021-01-04T00:00:00Z")


def regular(n, start=T0, interval=15, value=100.0):
    times = start + 60 * interval * np.arange(n, dtype=np.int64)
    return GlucoseSeries("p", times, np.full(n, value) + np.arange(n), interval)


def test_parse_two_rows():
    s = parse_cgm_csv("timestamp,glucose_mg_dl\n2021-01-04T00:00:00Z,100\n2021-01-04T00:15:00Z,110\n")
    assert len(s) == 2
    assert s.values.tolist() == [100.0, 110.0]
    assert s.times[1] - s.times[0] == 900


def test_rows_out_of_order_are_sorted():
    a = parse_cgm_csv("timestamp,glucose_mg_dl\n2021-01-04T00:00:00Z,100\n2021-01-04T00:15:00Z,110\n")
    b = parse_cgm_csv("timestamp,glucose_mg_dl\n2021-01-04T00:15:00Z,110\n2021-01-04T00:00:00Z,100\n")
    assert a == b


def test_malformed_value_reports_line():
    with pytest.raises(MalformedRow) as err:
        parse_cgm_csv("timestamp,glucose_mg_dl\n2021-01-04T00:00:00Z,abc\n")
    assert err.value.line == 2


@pytest.mark.parametrize(
    "row,line",
    [
        ("not-a-date,100", 3),
        ("2021-01-04T00:30:00Z,0", 3),
        ("2021-01-04T00:30:00Z,1000", 3),
        ("2021-01-04T00:30:00Z,nan", 3),
        ("2021-01-04T00:30:00Z,100,7", 3),
    ],
)
def test_malformed_rows(row, line):
    with pytest.raises(MalformedRow) as err:
        parse_cgm_csv(f"timestamp,glucose_mg_dl\n2021-01-04T00:00:00Z,100\n{row}\n")
    assert err.value.line == line


def test_bad_header_and_empty():
    with pytest.raises(MalformedRow):
        parse_cgm_csv("time,value\n2021-01-04T00:00:00Z,100\n")
    with pytest.raises(EmptySeries):
        parse_cgm_csv("timestamp,glucose_mg_dl\n")
    with pytest.raises(EmptySeries):
        parse_cgm_csv("")


def test_duplicate_timestamp():
    with pytest.raises(DuplicateTimestamp):
        parse_cgm_csv("timestamp,glucose_mg_dl\n2021-01-04T00:00:00Z,100\n2021-01-04T00:00:00Z,101\n")


def test_timestamps_utc():
    assert parse_timestamp("2021-01-04T00:00:00") == parse_timestamp("2021-01-04T01:00:00+01:00") == T0
    assert format_timestamp(T0) == "2021-01-04T00:00:00Z"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10**6), st.floats(1, 999)), min_size=1, max_size=30,
                unique_by=lambda r: r[0]))
def test_csv_round_trip(rows):
    times = np.array(sorted(T0 + 60 * t for t, _ in rows), dtype=np.int64)
    values = np.array([v for _, v in sorted(rows)], dtype=float)
    s = GlucoseSeries("p", times, values)
    assert parse_cgm_csv(serialize_cgm_csv(s), "p") == s


def test_file_round_trip_uses_stem_as_patient(tmp_path):
    s = regular(5)
    write_cgm_csv(s, tmp_path / "P7.csv")
    back = read_cgm_csv(tmp_path / "P7.csv")
    assert back.patient_id == "P7"
    assert np.array_equal(back.values, s.values)


def test_series_requires_increasing_times():
    with pytest.raises(PreconditionError):
        GlucoseSeries("p", np.array([2, 1], dtype=np.int64), np.array([1.0, 2.0]))


# -- gaps


def test_gapless_series_has_no_gaps():
    assert len(detect_gaps(regular(96), 30)) == 0


def test_single_hole_reported_once():
    s = regular(96)
    keep = np.ones(96, bool)
    keep[40:48] = False  # 2 h
    holed = GlucoseSeries("p", s.times[keep], s.values[keep])
    gaps = detect_gaps(holed, 30).gaps
    assert gaps == [(int(s.times[39]), int(s.times[48]))]


def test_gap_tolerance_below_interval():
    with pytest.raises(PreconditionError):
        detect_gaps(regular(4), 10)


# -- resampling


def test_resample_linear_midpoint():
    s = GlucoseSeries("p", np.array([T0, T0 + 1800], dtype=np.int64), np.array([100.0, 120.0]))
    r = resample(s, 15, max_fill=60)
    assert r.values.tolist() == [100.0, 110.0, 120.0]
    assert (np.diff(r.times) == 900).all()


def test_resample_regular_is_identity():
    s = regular(50)
    assert resample(s) == s


def test_resample_preserves_large_hole():
    s = regular(40)
    keep = np.ones(40, bool)
    keep[10:22] = False  # 3 h of missing samples
    r = resample(GlucoseSeries("p", s.times[keep], s.values[keep]), 15, max_fill=60)
    assert not set(s.times[10:22].tolist()) & set(r.times.tolist())
    assert len(r) == keep.sum()


def test_resample_fills_short_hole_and_jitter():
    times = np.array([T0, T0 + 900, T0 + 2700 + 120, T0 + 3600], dtype=np.int64)
    r = resample(GlucoseSeries("p", times, np.array([100.0, 100.0, 130.0, 130.0])), 15, 45)
    assert r.times.tolist() == [T0 + 900 * k for k in range(5)]
    assert np.all(np.isfinite(r.values))


def test_resample_preconditions():
    with pytest.raises(PreconditionError):
        resample(regular(3), 15, max_fill=10)
