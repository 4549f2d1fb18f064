"""End-to-end workflow: synthetic cohort, windows, images, repeated training, reports.

Every stage is a plain function so the CLI subcommands and the ``pipeline``
command share one code path. Output layout under ``out``::

    config.ini
    cohort/P1.csv ...
    windows/manifest.csv, windows/windows.npz
    images.npz
    runs/run01/{model/, history.csv, split.csv} ...
    reports/{table2.csv, table3.csv, boxplot_phases.csv, boxplot_patients.csv, stats.txt}
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import model as model_io
from .arrays import load_npz, save_npz
from .cgm_data import GlucoseSeries, read_cgm_csv, resample, write_cgm_csv
from .config import PipelineConfig, format_config
from .errors import DataError, GlucoscopeError, SampleTooSmall, StatsError
from .model import Model, build
from .stats import StatResult, compare_groups
from .synthetic import add_sensor_dropouts, generate_cohort
from .training import (
    ImageDataset,
    RunHistory,
    boxplot_csv,
    evaluate,
    evaluate_by_patient,
    patient_table,
    phase_table,
    train,
)
from .transforms import save_png, transform_batch
from .windowing import LabeledWindow, manifest_csv, save_windows, segment, split

log = logging.getLogger(__name__)

PARTITIONS = ("train", "validation", "test")
PHASE_HEADERS = {"train": "Training", "validation": "Validation", "test": "Test"}


# ------------------------------------------------------------------ Phase I


def dropout_seed(seed: int, patient_index: int) -> int:
    return 100 * seed + patient_index


def synth_cohort(cfg: PipelineConfig) -> list[GlucoseSeries]:
    """Raw cohort with sensor dropouts, as a CGM export would look."""
    s = cfg.synthetic
    cohort = generate_cohort(cfg.seed, s.n_patients, s.days)
    return [
        add_sensor_dropouts(
            series, s.dropouts_per_patient, dropout_seed(cfg.seed, i), s.dropout_min_hours, s.dropout_max_hours
        )
        for i, series in enumerate(cohort)
    ]


def write_cohort(cohort: Sequence[GlucoseSeries], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for series in cohort:
        path = out_dir / f"{series.patient_id}.csv"
        write_cgm_csv(series, path)
        paths.append(path)
    return paths


def read_cohort(paths: Sequence[str | Path]) -> list[GlucoseSeries]:
    cohort = [read_cgm_csv(p) for p in paths]
    ids = [s.patient_id for s in cohort]
    if len(set(ids)) != len(ids):
        raise DataError(f"duplicate patient ids among inputs: {ids}")
    return cohort


def make_windows(cohort: Sequence[GlucoseSeries], cfg: PipelineConfig) -> list[LabeledWindow]:
    """Resample each series onto the nominal grid and cut labeled windows."""
    w = cfg.windowing
    windows: list[LabeledWindow] = []
    for series in sorted(cohort, key=lambda s: s.patient_id):
        grid = resample(series, cfg.data.interval_min, cfg.data.max_fill_min)
        windows += segment(grid, w.window_hours, w.step_hours, w.lookahead_hours, cfg.threshold_config())
    return windows


def write_windows(windows: Sequence[LabeledWindow], out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.csv").write_text(manifest_csv(windows), encoding="utf-8")
    save_windows(windows, out_dir / "windows.npz")
    return out_dir / "windows.npz"


def make_images(windows: Sequence[LabeledWindow], cfg: PipelineConfig) -> ImageDataset:
    images = transform_batch([w.input for w in windows], cfg.transform_config())
    return ImageDataset(images, [int(w.label) for w in windows], [w.patient_id for w in windows])


def save_images(path: str | Path, dataset: ImageDataset, start_times: Sequence[int]) -> None:
    save_npz(
        path,
        images=dataset.images,
        labels=dataset.labels,
        patient_ids=dataset.patient_ids,
        start_times=np.asarray(start_times, dtype=np.int64),
    )


def load_images(path: str | Path) -> tuple[ImageDataset, np.ndarray]:
    z = load_npz(path)
    return ImageDataset(z["images"], z["labels"], z["patient_ids"]), z["start_times"]


def export_pngs(dataset: ImageDataset, out_dir: str | Path, limit: int | None = None) -> int:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = len(dataset) if limit is None else min(limit, len(dataset))
    for i in range(n):
        save_png(dataset.images[i], out_dir / f"{i:05d}_{dataset.patient_ids[i]}_{dataset.labels[i]}.png")
    return n


# ----------------------------------------------------------------- Phase II


@dataclass
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def parts(self) -> dict[str, np.ndarray]:
        return {"train": self.train, "validation": self.validation, "test": self.test}

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("index", "partition"))
        rows = sorted((int(i), name) for name, idx in self.parts().items() for i in idx)
        w.writerows(rows)
        return out.getvalue()

    @classmethod
    def read_csv(cls, path: str | Path) -> "Split":
        parts: dict[str, list[int]] = {p: [] for p in PARTITIONS}
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["partition"] not in parts:
                    raise DataError(f"unknown partition {row['partition']!r} in {path}")
                parts[row["partition"]].append(int(row["index"]))
        return cls(*(np.array(parts[p], dtype=np.int64) for p in PARTITIONS))


@dataclass
class _Item:
    index: int
    patient_id: str
    start_time: int


def split_dataset(dataset: ImageDataset, cfg: PipelineConfig, start_times: Sequence[int]) -> Split:
    """Fixed across repetitions: seeded by the pipeline seed only."""
    items = [_Item(i, str(p), int(t)) for i, (p, t) in enumerate(zip(dataset.patient_ids, start_times))]
    parts = split(items, cfg.split_spec())
    return Split(*(np.array(sorted(it.index for it in part), dtype=np.int64) for part in parts))


def train_repetition(dataset: ImageDataset, parts: Split, cfg: PipelineConfig, repeat: int) -> tuple[Model, RunHistory]:
    model = build(cfg.model_config(repeat))
    return train(model, dataset.subset(parts.train), dataset.subset(parts.validation), cfg.train_config(repeat))


def write_run(run_dir: str | Path, model: Model, history: RunHistory, parts: Split) -> None:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    model_io.save(model, run_dir / "model")
    (run_dir / "history.csv").write_text(history.to_csv(), encoding="utf-8")
    (run_dir / "split.csv").write_text(parts.to_csv(), encoding="utf-8")


@dataclass
class RunScores:
    phases: dict[str, float]
    patients: dict[str, float]


def score_run(model: Model, dataset: ImageDataset, parts: Split) -> RunScores:
    phases = {name: evaluate(model, dataset.subset(idx), name).accuracy for name, idx in parts.parts().items()}
    per_patient = evaluate_by_patient(model, dataset.subset(parts.test), "test")
    return RunScores(phases, {p: m.accuracy for p, m in per_patient.items()})


def format_stats(results: dict[str, StatResult], names: tuple[str, str] = ("validation", "test")) -> str:
    a, b = names
    sa, sb, f, t = results["shapiro_a"], results["shapiro_b"], results["f_test"], results["t_test"]
    lines = [
        f"shapiro-wilk {a}: W={sa.statistic:.4f} p={sa.p_value:.4f}",
        f"shapiro-wilk {b}: W={sb.statistic:.4f} p={sb.p_value:.4f}",
        f"f-test: F={f.statistic:.4f} p={f.p_value:.4f} df=({f.n1 - 1},{f.n2 - 1})",
        f"t-test pooled: t={t.statistic:.4f} p={t.p_value:.4f} df={t.n1 + t.n2 - 2}",
    ]
    return "\n".join(lines) + "\n"


def write_reports(scores: Sequence[RunScores], patients: Sequence[str], out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    phase_cols = {PHASE_HEADERS[name]: [s.phases[name] for s in scores] for name in PARTITIONS}
    patient_cols = {f"Patient {p}": [s.patients.get(p, float("nan")) for s in scores] for p in patients}
    files = {
        "table2": (out_dir / "table2.csv", phase_table([s.phases for s in scores])),
        "table3": (out_dir / "table3.csv", patient_table([s.patients for s in scores], patients)),
        "boxplot_phases": (out_dir / "boxplot_phases.csv", boxplot_csv(phase_cols)),
        "boxplot_patients": (out_dir / "boxplot_patients.csv", boxplot_csv(patient_cols)),
    }
    val = [s.phases["validation"] for s in scores]
    test = [s.phases["test"] for s in scores]
    try:
        stats_text = format_stats(compare_groups(val, test))
    except (SampleTooSmall, StatsError) as exc:
        stats_text = f"not computed: {exc}\n"
    files["stats"] = (out_dir / "stats.txt", stats_text)
    for path, text in files.values():
        path.write_text(text, encoding="utf-8")
    return {k: p for k, (p, _) in files.items()}


def run_dirs(out: Path, repeats: int) -> list[Path]:
    return [out / "runs" / f"run{r + 1:02d}" for r in range(repeats)]


@dataclass
class PipelineResult:
    scores: list[RunScores]
    split: Split
    n_windows: int
    baseline: float  # majority-class accuracy on the validation partition
    reports: dict[str, Path]


def run_pipeline(cfg: PipelineConfig, out: str | Path, repeats: int | None = None) -> PipelineResult:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    repeats = cfg.pipeline.repeats if repeats is None else repeats
    if repeats < 1:
        raise GlucoscopeError("repeats must be at least 1")
    (out / "config.ini").write_text(format_config(cfg), encoding="utf-8")

    started = time.perf_counter()
    cohort = synth_cohort(cfg)
    write_cohort(cohort, out / "cohort")
    windows = make_windows(cohort, cfg)
    write_windows(windows, out / "windows")
    dataset = make_images(windows, cfg)
    start_times = [w.start_time for w in windows]
    save_images(out / "images.npz", dataset, start_times)
    log.info("phase I: %d windows, %.1f s", len(windows), time.perf_counter() - started)

    parts = split_dataset(dataset, cfg, start_times)
    scores = []
    for r, run_dir in enumerate(run_dirs(out, repeats)):
        t0 = time.perf_counter()
        model, history = train_repetition(dataset, parts, cfg, r)
        write_run(run_dir, model, history, parts)
        scores.append(score_run(model, dataset, parts))
        log.info("run %d/%d: %s in %.1f s", r + 1, repeats,
                 " ".join(f"{k}={v:.2f}" for k, v in scores[-1].phases.items()), time.perf_counter() - t0)

    patients = sorted(set(dataset.patient_ids.tolist()))
    reports = write_reports(scores, patients, out / "reports")
    val_labels = dataset.labels[parts.validation]
    hypo_share = float(val_labels.mean()) if len(val_labels) else 0.0
    baseline = 100.0 * max(hypo_share, 1.0 - hypo_share)
    log.info("pipeline finished in %.1f s", time.perf_counter() - started)
    return PipelineResult(scores, parts, len(windows), baseline, reports)
