"""24 h input windows, next-24 h hypoglycaemia labels, 1 h sliding augmentation, splits."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .arrays import save_npz
from .cgm_data import GlucoseSeries, format_timestamp, parse_timestamp
from .errors import EmptyLookahead, PreconditionError, SeriesTooShort

HYPO_THRESHOLD = 70.0  # mg/dL, strict: glucose < 70 is hypoglycaemia
HYPER_THRESHOLD = 180.0  # mg/dL, kept for reference, never used for labels


class Label(enum.IntEnum):
    """Class index used throughout training; argmax ties resolve to NORMAL."""

    NORMAL = 0
    HYPOGLYCEMIA = 1


@dataclass(frozen=True)
class Thresholds:
    hypo: float = HYPO_THRESHOLD
    hyper: float = HYPER_THRESHOLD

    def __post_init__(self) -> None:
        if not self.hypo < self.hyper:
            raise PreconditionError("hypo threshold must be below hyper threshold")


@dataclass(frozen=True)
class LabeledWindow:
    patient_id: str
    start_time: int
    input: np.ndarray
    label: Label
    lookahead_min: float


class SplitStrategy(str, enum.Enum):
    RANDOM = "random"
    CHRONOLOGICAL = "chronological"
    BY_PATIENT = "by_patient"


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.75
    validation: float = 0.15
    test: float = 0.10
    seed: int = 0
    strategy: SplitStrategy = SplitStrategy.RANDOM

    def __post_init__(self) -> None:
        if abs(self.train + self.validation + self.test - 1.0) > 1e-9:
            raise PreconditionError("split fractions must sum to 1")
        if min(self.train, self.validation, self.test) < 0:
            raise PreconditionError("split fractions must be non-negative")
        object.__setattr__(self, "strategy", SplitStrategy(self.strategy))


def label_window(input_span: Sequence[float] | None, lookahead_values: Sequence[float],
                 thresholds: Thresholds = Thresholds()) -> Label:
    """Hypoglycaemia iff any lookahead value is strictly below the threshold.

    ``input_span`` is accepted for symmetry with the windowing call but does
    not influence the label.
    """
    look = np.asarray(lookahead_values, dtype=float)
    if look.size == 0:
        raise EmptyLookahead("lookahead span is empty")
    return Label.HYPOGLYCEMIA if look.min() < thresholds.hypo else Label.NORMAL


def _grid(series: GlucoseSeries) -> np.ndarray:
    """Values on the nominal grid from the first sample, NaN where missing."""
    step = int(round(series.nominal_interval * 60))
    offsets = series.times - series.times[0]
    if np.any(offsets % step):
        raise PreconditionError("series is not on its nominal grid; resample first")
    idx = offsets // step
    grid = np.full(int(idx[-1]) + 1, np.nan)
    grid[idx] = series.values
    return grid


def segment(
    series: GlucoseSeries,
    window_h: int = 24,
    step_h: int = 1,
    lookahead_h: int = 24,
    thresholds: Thresholds = Thresholds(),
) -> list[LabeledWindow]:
    """Slide a ``window_h`` input window in ``step_h`` steps and label each.

    A window is kept only when every grid point of both the input span and the
    following ``lookahead_h`` span holds a sample; others are skipped silently.
    """
    for name, v in (("window_h", window_h), ("step_h", step_h), ("lookahead_h", lookahead_h)):
        if v <= 0 or int(v) != v:
            raise PreconditionError(f"{name} must be a positive whole number of hours")
    if len(series) == 0:
        raise SeriesTooShort("empty series")
    per_hour = 60 / series.nominal_interval
    if per_hour != int(per_hour):
        raise PreconditionError("nominal interval must divide one hour")
    per_hour = int(per_hour)
    n_in, n_look, n_step = window_h * per_hour, lookahead_h * per_hour, step_h * per_hour

    grid = _grid(series)
    if len(grid) < n_in + n_look:
        raise SeriesTooShort(
            f"series spans {len(grid)} samples, need {n_in + n_look} for {window_h}+{lookahead_h} h"
        )

    # running count of missing points makes each window's completeness O(1)
    missing = np.concatenate(([0], np.cumsum(np.isnan(grid))))
    step_s = int(series.nominal_interval * 60)
    windows = []
    for s in range(0, len(grid) - n_in - n_look + 1, n_step):
        if missing[s + n_in + n_look] - missing[s]:
            continue
        look = grid[s + n_in : s + n_in + n_look]
        windows.append(
            LabeledWindow(
                patient_id=series.patient_id,
                start_time=int(series.times[0]) + s * step_s,
                input=grid[s : s + n_in].copy(),
                label=label_window(None, look, thresholds),
                lookahead_min=float(look.min()),
            )
        )
    return windows


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_sizes(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    """Train and validation sizes are rounded (half up); test takes the rest."""
    n_train = min(_round_half_up(n * spec.train), n)
    n_val = min(_round_half_up(n * spec.validation), n - n_train)
    return n_train, n_val, n - n_train - n_val


def split(windows: Sequence, spec: SplitSpec = SplitSpec()) -> tuple[list, list, list]:
    """Partition windows into (train, validation, test), deterministic in ``spec.seed``."""
    if len(windows) == 0:
        raise PreconditionError("cannot split an empty window list")
    items = list(windows)
    n = len(items)

    if spec.strategy is SplitStrategy.BY_PATIENT:
        return _split_by_patient(items, spec)

    if spec.strategy is SplitStrategy.RANDOM:
        order = np.random.default_rng(spec.seed).permutation(n)
    else:
        order = sorted(range(n), key=lambda i: (items[i].start_time, items[i].patient_id))
    n_train, n_val, _ = split_sizes(n, spec)
    ordered = [items[i] for i in order]
    return ordered[:n_train], ordered[n_train : n_train + n_val], ordered[n_train + n_val :]


def _split_by_patient(items: list, spec: SplitSpec) -> tuple[list, list, list]:
    patients = sorted({w.patient_id for w in items})
    counts = {p: sum(1 for w in items if w.patient_id == p) for p in patients}
    order = np.random.default_rng(spec.seed).permutation(len(patients))
    fractions = (spec.train, spec.validation, spec.test)
    assigned: list[list[str]] = [[], [], []]
    sizes = [0, 0, 0]
    total = len(items)
    for k, i in enumerate(order):
        p = patients[i]
        if k < 3 and len(patients) >= 3 and fractions[k] > 0:
            part = k  # every non-empty partition gets at least one patient
        else:
            part = max(range(3), key=lambda j: fractions[j] * total - sizes[j])
        assigned[part].append(p)
        sizes[part] += counts[p]
    member = {p: j for j, ps in enumerate(assigned) for p in ps}
    out: tuple[list, list, list] = ([], [], [])
    for w in items:
        out[member[w.patient_id]].append(w)
    return out


MANIFEST_HEADER = ("patient_id", "start_time", "label", "lookahead_min")


def manifest_csv(windows: Sequence[LabeledWindow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for w in windows:
        writer.writerow(
            (w.patient_id, format_timestamp(w.start_time), w.label.name.lower(), repr(w.lookahead_min))
        )
    return out.getvalue()


def read_manifest(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["start_time"] = parse_timestamp(r["start_time"])
        r["label"] = Label[r["label"].upper()]
        r["lookahead_min"] = float(r["lookahead_min"])
    return rows


def save_windows(windows: Sequence[LabeledWindow], path: str | Path) -> None:
    """Write window inputs plus metadata to an ``.npz`` bundle."""
    save_npz(
        path,
        inputs=np.stack([w.input for w in windows]) if windows else np.zeros((0, 0)),
        labels=np.array([int(w.label) for w in windows], dtype=np.int64),
        patient_ids=np.array([w.patient_id for w in windows], dtype=str),
        start_times=np.array([w.start_time for w in windows], dtype=np.int64),
        lookahead_min=np.array([w.lookahead_min for w in windows], dtype=np.float64),
    )


def load_windows(path: str | Path) -> list[LabeledWindow]:
    with np.load(path) as z:
        return [
            LabeledWindow(str(p), int(t), x.copy(), Label(int(lab)), float(m))
            for p, t, x, lab, m in zip(
                z["patient_ids"], z["start_times"], z["inputs"], z["labels"], z["lookahead_min"]
            )
        ]
