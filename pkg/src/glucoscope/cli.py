"""``glucoscope`` command line.

Exit codes: 0 ok, 2 usage, 3 config, 4 data, 5 windowing, 6 transform,
7 model, 8 training, 9 stats, 10 file system, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import model as model_io
from . import pipeline as pl
from .cgm_data import detect_gaps, format_timestamp, read_cgm_csv
from .config import PipelineConfig, load_config
from .errors import EXIT_CODES, ConfigError, DataError, GlucoscopeError
from .stats import compare_groups, population_std
from .windowing import load_windows

log = logging.getLogger("glucoscope")

FIXTURES = ("table2",)


def _config(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(pipeline={"seed": args.seed})
    if getattr(args, "repeats", None) is not None:
        cfg = cfg.with_overrides(pipeline={"repeats": args.repeats})
    return cfg.validate()


# ------------------------------------------------------------------ commands


def cmd_synth(args) -> int:
    cfg = _config(args)
    for path in pl.write_cohort(pl.synth_cohort(cfg), args.out):
        print(path)
    return 0


def cmd_ingest(args) -> int:
    cfg = _config(args)
    tolerance = cfg.data.gap_tolerance_min if args.tolerance is None else args.tolerance
    rows = []
    for path in args.csv:
        series = read_cgm_csv(path)
        gaps = detect_gaps(series, tolerance)
        print(f"{series.patient_id}: {len(series)} samples, "
              f"{format_timestamp(int(series.times[0]))} to {format_timestamp(int(series.times[-1]))}, "
              f"{len(gaps)} gaps over {tolerance:g} min")
        for start, end in gaps.gaps:
            print(f"  gap {format_timestamp(start)} -> {format_timestamp(end)} ({(end - start) / 60:g} min)")
            rows.append((series.patient_id, format_timestamp(start), format_timestamp(end), (end - start) // 60))
    if args.report:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("patient_id", "gap_start", "gap_end", "minutes"))
        w.writerows(rows)
        Path(args.report).write_text(out.getvalue(), encoding="utf-8")
    return 0


def cmd_window(args) -> int:
    cfg = _config(args)
    windows = pl.make_windows(pl.read_cohort(args.csv), cfg)
    pl.write_windows(windows, args.out)
    n_hypo = sum(int(w.label) for w in windows)
    print(f"{len(windows)} windows ({n_hypo} hypoglycemia) -> {args.out}")
    return 0


def cmd_transform(args) -> int:
    cfg = _config(args)
    windows = load_windows(args.windows)
    dataset = pl.make_images(windows, cfg)
    pl.save_images(args.out, dataset, [w.start_time for w in windows])
    print(f"{len(dataset)} images of {cfg.model.input_size}x{cfg.model.input_size} -> {args.out}")
    if args.png_dir:
        n = pl.export_pngs(dataset, args.png_dir, args.png_limit)
        print(f"{n} png files -> {args.png_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.repeat < 1:
        raise ConfigError("--repeat is 1-based")
    dataset, start_times = pl.load_images(args.images)
    parts = pl.split_dataset(dataset, cfg, start_times)
    model, history = pl.train_repetition(dataset, parts, cfg, args.repeat - 1)
    pl.write_run(args.out, model, history, parts)
    final = history.final
    print(f"train {final['train'].accuracy:.2f} validation {final['validation'].accuracy:.2f} "
          f"({history.wall_seconds:.1f} s) -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    dataset, _ = pl.load_images(args.images)
    scores = []
    for run in args.run:
        run = Path(run)
        model = model_io.load(run / "model")
        scores.append(pl.score_run(model, dataset, pl.Split.read_csv(run / "split.csv")))
    patients = sorted(set(dataset.patient_ids.tolist()))
    reports = pl.write_reports(scores, patients, args.out)
    print(reports["table2"].read_text(encoding="utf-8"), end="")
    return 0


def _read_columns(text: str, columns: Sequence[str]) -> dict[str, list[float]]:
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in columns if c not in (reader.fieldnames or [])]
    if missing:
        raise DataError(f"columns {missing} not found; have {reader.fieldnames}")
    first = reader.fieldnames[0]
    out: dict[str, list[float]] = {c: [] for c in columns}
    for row in reader:
        if row[first] in ("Avg", "Std"):
            continue
        for c in columns:
            try:
                out[c].append(float(row[c]))
            except ValueError:
                raise DataError(f"non-numeric value {row[c]!r} in column {c}") from None
    return out


def cmd_stats(args) -> int:
    if args.fixture:
        text = resources.files("glucoscope").joinpath(f"data/{args.fixture}.csv").read_text(encoding="utf-8")
    else:
        text = Path(args.csv).read_text(encoding="utf-8")
    names = tuple(c.strip() for c in args.columns.split(","))
    if len(names) != 2:
        raise ConfigError("--columns takes exactly two column names")
    cols = _read_columns(text, names)
    a, b = cols[names[0]], cols[names[1]]
    for name in names:
        col = cols[name]
        print(f"{name}: n={len(col)} mean={sum(col) / len(col):.2f} std={population_std(col):.2f}")
    print(pl.format_stats(compare_groups(a, b), names), end="")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    result = pl.run_pipeline(cfg, args.out)
    print(result.reports["table2"].read_text(encoding="utf-8"), end="")
    print(f"windows {result.n_windows}, validation majority baseline {result.baseline:.2f}")
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glucoscope", description="CGM hypoglycemia prediction from scalogram images")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, seed=True):
        sp.add_argument("--config", help="INI config file (defaults apply for missing keys)")
        if seed:
            sp.add_argument("--seed", type=int, help="override [pipeline] seed")
        return sp

    sp = with_config(sub.add_parser("synth", help="write a synthetic cohort as CGM CSV files"))
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_synth)

    sp = with_config(sub.add_parser("ingest", help="validate CGM CSV files and report gaps"), seed=False)
    sp.add_argument("csv", nargs="+")
    sp.add_argument("--tolerance", type=float, help="gap tolerance in minutes")
    sp.add_argument("--report", help="also write gaps as CSV")
    sp.set_defaults(func=cmd_ingest)

    sp = with_config(sub.add_parser("window", help="resample, segment and label windows"), seed=False)
    sp.add_argument("csv", nargs="+")
    sp.add_argument("--out", required=True, help="output directory for manifest.csv and windows.npz")
    sp.set_defaults(func=cmd_window)

    sp = with_config(sub.add_parser("transform", help="turn windows into images"), seed=False)
    sp.add_argument("--windows", required=True, help="windows.npz from `window`")
    sp.add_argument("--out", required=True, help="output images .npz")
    sp.add_argument("--png-dir", help="also export PNG files here")
    sp.add_argument("--png-limit", type=int, help="export at most this many PNGs")
    sp.set_defaults(func=cmd_transform)

    sp = with_config(sub.add_parser("train", help="train one model"))
    sp.add_argument("--images", required=True)
    sp.add_argument("--repeat", type=int, default=1, help="1-based repetition index (selects the seeds)")
    sp.add_argument("--out", required=True, help="run directory")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score trained runs and write report tables")
    sp.add_argument("--images", required=True)
    sp.add_argument("--run", action="append", required=True, help="run directory (repeatable)")
    sp.add_argument("--out", required=True, help="report directory")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("stats", help="normality, F and t tests on two accuracy columns")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--fixture", choices=FIXTURES)
    src.add_argument("--csv", help="table CSV such as reports/table2.csv")
    sp.add_argument("--columns", default="Validation,Test")
    sp.set_defaults(func=cmd_stats)

    sp = with_config(sub.add_parser("pipeline", help="run everything end to end"))
    sp.add_argument("--repeats", type=int, help="override [pipeline] repeats")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except GlucoscopeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
