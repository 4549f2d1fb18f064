"""Parsing, validation and regularisation of CGM glucose series.

Series are stored as two parallel numpy arrays: integer UTC epoch seconds and
glucose values in mg/dL.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DuplicateTimestamp, EmptySeries, MalformedRow, PreconditionError

CSV_HEADER = ("timestamp", "glucose_mg_dl")
GLUCOSE_BOUNDS = (0.0, 1000.0)  # open interval, mg/dL
MGDL_PER_MMOL = 18.016
DEFAULT_INTERVAL_MIN = 15
DEFAULT_MAX_FILL_MIN = 45


@dataclass(frozen=True)
class GlucoseSample:
    timestamp: int  # UTC epoch seconds
    value: float


@dataclass
class GlucoseSeries:
    patient_id: str
    times: np.ndarray
    values: np.ndarray
    nominal_interval: int = DEFAULT_INTERVAL_MIN

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise PreconditionError("times and values must be 1-D arrays of equal length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise PreconditionError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def samples(self) -> list[GlucoseSample]:
        return [GlucoseSample(int(t), float(v)) for t, v in zip(self.times, self.values)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GlucoseSeries):
            return NotImplemented
        return (
            self.patient_id == other.patient_id
            and self.nominal_interval == other.nominal_interval
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )


@dataclass
class GapReport:
    gaps: list[tuple[int, int]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.gaps)

    def __len__(self) -> int:
        return len(self.gaps)


def parse_timestamp(text: str) -> int:
    """ISO-8601 to UTC epoch seconds. Naive timestamps are taken as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_cgm_csv(
    data: bytes | str, patient_id: str = "patient", nominal_interval: int = DEFAULT_INTERVAL_MIN
) -> GlucoseSeries:
    """Parse a ``timestamp,glucose_mg_dl`` CSV into a sorted series.

    Line numbers in :class:`MalformedRow` count the header as line 1.
    Duplicate timestamps are rejected rather than silently merged.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise EmptySeries("no header")
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise MalformedRow(1, f"expected header {','.join(CSV_HEADER)}")

    times: list[int] = []
    values: list[float] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise MalformedRow(lineno, f"expected 2 fields, got {len(row)}")
        try:
            t = parse_timestamp(row[0])
        except ValueError:
            raise MalformedRow(lineno, f"bad timestamp {row[0]!r}") from None
        try:
            v = float(row[1])
        except ValueError:
            raise MalformedRow(lineno, f"bad glucose value {row[1]!r}") from None
        if not (math.isfinite(v) and GLUCOSE_BOUNDS[0] < v < GLUCOSE_BOUNDS[1]):
            raise MalformedRow(lineno, f"glucose {v} outside {GLUCOSE_BOUNDS}")
        times.append(t)
        values.append(v)

    if not times:
        raise EmptySeries("no samples")
    t_arr = np.array(times, dtype=np.int64)
    v_arr = np.array(values, dtype=np.float64)
    order = np.argsort(t_arr, kind="stable")
    t_arr, v_arr = t_arr[order], v_arr[order]
    dup = np.flatnonzero(np.diff(t_arr) == 0)
    if dup.size:
        raise DuplicateTimestamp(f"duplicate timestamp {format_timestamp(t_arr[dup[0]])}")
    return GlucoseSeries(patient_id, t_arr, v_arr, nominal_interval)


def read_cgm_csv(path: str | Path, patient_id: str | None = None, **kwargs) -> GlucoseSeries:
    path = Path(path)
    return parse_cgm_csv(path.read_bytes(), patient_id or path.stem, **kwargs)


def serialize_cgm_csv(series: GlucoseSeries) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for t, v in zip(series.times, series.values):
        writer.writerow((format_timestamp(t), repr(float(v))))
    return out.getvalue()


def write_cgm_csv(series: GlucoseSeries, path: str | Path) -> None:
    Path(path).write_text(serialize_cgm_csv(series), encoding="utf-8")


def detect_gaps(series: GlucoseSeries, tolerance: float) -> GapReport:
    """Report every consecutive pair of samples further apart than ``tolerance`` minutes."""
    if len(series) == 0:
        raise EmptySeries("cannot detect gaps in an empty series")
    if tolerance < series.nominal_interval:
        raise PreconditionError(
            f"tolerance {tolerance} min is below the nominal interval {series.nominal_interval} min"
        )
    spacing = np.diff(series.times)
    idx = np.flatnonzero(spacing > tolerance * 60)
    return GapReport([(int(series.times[i]), int(series.times[i + 1])) for i in idx])


def resample(
    series: GlucoseSeries, interval: float = DEFAULT_INTERVAL_MIN, max_fill: float = DEFAULT_MAX_FILL_MIN
) -> GlucoseSeries:
    """Put the series on an exact grid anchored at its first sample.

    Grid points are linearly interpolated from the bracketing source samples
    when those are at most ``max_fill`` minutes apart; grid points inside
    wider holes are dropped so the gap survives.
    """
    if len(series) == 0:
        raise EmptySeries("cannot resample an empty series")
    if interval <= 0:
        raise PreconditionError("interval must be positive")
    if max_fill < interval:
        raise PreconditionError("max_fill must be at least the interval")

    step = int(round(interval * 60))
    t0 = int(series.times[0])
    n_grid = (int(series.times[-1]) - t0) // step + 1
    grid = t0 + step * np.arange(n_grid, dtype=np.int64)

    src_t = series.times
    src_v = series.values
    right = np.searchsorted(src_t, grid, side="left")
    exact = (right < len(src_t)) & (src_t[np.minimum(right, len(src_t) - 1)] == grid)

    left = np.clip(right - 1, 0, len(src_t) - 1)
    right_c = np.clip(right, 0, len(src_t) - 1)
    span = src_t[right_c] - src_t[left]
    fillable = ~exact & (right > 0) & (right < len(src_t)) & (span <= max_fill * 60)

    values = np.full(n_grid, np.nan)
    values[exact] = src_v[right[exact]]
    li, ri = left[fillable], right_c[fillable]
    frac = (grid[fillable] - src_t[li]) / (src_t[ri] - src_t[li])
    values[fillable] = src_v[li] + frac * (src_v[ri] - src_v[li])

    keep = exact | fillable
    return GlucoseSeries(series.patient_id, grid[keep], values[keep], int(round(interval)))
