"""Acceptance gate: one test per primary criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines inline;
they are also repeated in the terminal summary.
"""

import filecmp
import re
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from glucoscope import cli
from glucoscope.config import PipelineConfig
from glucoscope.model import PAPER_CONFIG, build
from glucoscope.pipeline import run_pipeline
from glucoscope.stats import compare_groups

from test_model import analytic_counts

TESTS = Path(__file__).parent
RESULTS: list[str] = []


def report(name: str, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def run_suite(*node_ids: str) -> tuple[bool, float, str]:
    """Run other test nodes in a child pytest; returns (green, seconds, summary)."""
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *node_ids],
        cwd=TESTS.parent,
        capture_output=True,
        text=True,
    )
    seconds = time.perf_counter() - start
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    return proc.returncode == 0, seconds, summary


def test_statistical_replay(capsys):
    start = time.perf_counter()
    code = cli.main(["stats", "--fixture", "table2"])
    seconds = time.perf_counter() - start
    out = capsys.readouterr().out

    def grab(pattern):
        return [float(v) for v in re.search(pattern, out).groups()]

    (t_p,) = grab(r"t-test pooled: t=\S+ p=(\S+)")
    (f_p,) = grab(r"f-test: F=\S+ p=(\S+)")
    sw = [float(p) for p in re.findall(r"shapiro-wilk \w+: W=\S+ p=(\S+)", out)]
    means = [float(m) for m in re.findall(r"mean=(\S+)", out)]
    stds = [float(s) for s in re.findall(r"std=(\S+)", out)]
    checks = {
        "t p in [0.18, 0.21]": 0.18 <= t_p <= 0.21,
        "F p > 0.9": f_p > 0.9,
        "SW p >= 0.05": len(sw) == 2 and min(sw) >= 0.05,
        "means": np.allclose(means, [80.00, 78.78], atol=0.01 + 1e-9),
        "stds": np.allclose(stds, [2.01, 2.02], atol=0.01 + 1e-9),
        "< 1 s": seconds < 1.0,
        "exit 0": code == 0,
    }
    failed = [k for k, ok in checks.items() if not ok]
    detail = (f"t p={t_p:.4f} F p={f_p:.4f} SW p={sw} means={means} stds={stds} {seconds:.2f}s"
              + (f"; failed: {', '.join(failed)}" if failed else ""))
    with capsys.disabled():
        report("statistical replay", not failed, detail)


def test_gradient_suite():
    ok, seconds, summary = run_suite(
        "tests/test_nn_kernels.py::test_conv_gradients",
        "tests/test_nn_kernels.py::test_batchnorm_gradients",
        "tests/test_nn_kernels.py::test_relu_gradients",
        "tests/test_nn_kernels.py::test_maxpool_gradients",
        "tests/test_nn_kernels.py::test_avgpool_gradients",
        "tests/test_nn_kernels.py::test_global_avgpool_gradients",
        "tests/test_nn_kernels.py::test_dense_gradients",
        "tests/test_nn_kernels.py::test_softmax_cross_entropy_gradient",
        "tests/test_model.py::test_end_to_end_gradients",
    )
    report("gradient suite", ok and seconds < 120, f"{summary} ({seconds:.1f}s, budget 120s)")


def test_oracle_equivalence():
    ok, seconds, summary = run_suite(
        "tests/test_transforms.py::test_fft_equals_direct_sum_100_trials",
        "tests/test_nn_kernels.py::test_conv_fast_path_equals_naive",
        "tests/test_nn_kernels.py::test_conv_matches_loop_oracle_reference_case",
        "tests/test_transforms.py::test_gaf_matches_definition_loop",
    )
    report("oracle equivalence", ok and seconds < 60, f"{summary} ({seconds:.1f}s, budget 60s)")


def test_windowing_counts():
    ok, seconds, summary = run_suite(
        "tests/test_windowing.py::test_gapless_14_days_gives_289_windows",
        "tests/test_windowing.py::test_48_hours_gives_one_window",
        "tests/test_windowing.py::test_brute_force_agrees_on_random_gap_patterns",
    )
    report("windowing counts", ok, f"{summary} ({seconds:.1f}s)")


def test_memorisation():
    ok, seconds, summary = run_suite("tests/test_training.py::test_memorises_eight_windows")
    report("memorisation", ok, f"{summary} ({seconds:.1f}s)")


def test_paper_scale_build():
    model = build(PAPER_CONFIG)
    oracle, _ = analytic_counts(PAPER_CONFIG)
    count = model.backbone_parameter_count
    start = time.perf_counter()
    probs = model.forward(np.random.default_rng(0).random((1, 224, 224, 3), dtype=np.float32))
    seconds = time.perf_counter() - start
    ok = count == oracle and abs(count - 7.0e6) / 7.0e6 < 0.05 and probs.shape == (1, 2)
    report("paper-scale build", ok, f"backbone {count:,} (oracle {oracle:,}), batch-1 forward {seconds:.1f}s")


@pytest.mark.slow
def test_desk_scale_learning(tmp_path):
    cfg = PipelineConfig()
    start = time.perf_counter()
    result = run_pipeline(cfg, tmp_path / "desk")
    minutes = (time.perf_counter() - start) / 60
    val = [s.phases["validation"] for s in result.scores]
    test = [s.phases["test"] for s in result.scores]
    t = compare_groups(val, test)["t_test"]
    margin = float(np.mean(val)) - result.baseline
    ok = len(val) == 10 and margin >= 10 and t.p_value > 0.05 and minutes < 30
    report(
        "desk-scale learning",
        ok,
        f"validation mean {np.mean(val):.2f} vs baseline {result.baseline:.2f} (+{margin:.2f}), "
        f"test mean {np.mean(test):.2f}, t-test p={t.p_value:.4f}, {result.n_windows} windows, {minutes:.1f} min",
    )


def _tree_diff(a: Path, b: Path) -> list[str]:
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    mismatch = [str(f) for f in files if not (b / f).exists() or not filecmp.cmp(a / f, b / f, shallow=False)]
    missing = sorted(str(p.relative_to(b)) for p in b.rglob("*") if p.is_file() and not (a / p.relative_to(b)).exists())
    return mismatch + missing


@pytest.mark.slow
def test_determinism(tmp_path):
    # same pipeline as the desk run with fewer epochs; determinism does not depend on epoch count
    cfg = PipelineConfig().with_overrides(training={"epochs": 3}, pipeline={"repeats": 2})
    for name in ("a", "b"):
        run_pipeline(cfg, tmp_path / name)
    a, b = tmp_path / "a", tmp_path / "b"
    checked = [p for p in a.rglob("*") if p.is_file()]
    reports = [p for p in checked if "reports" in p.parts or "model" in p.parts]
    diff = _tree_diff(a, b)
    report("determinism", not diff and len(reports) >= 9,
           f"{len(checked)} files compared, {len(reports)} report/checkpoint files, {len(diff)} differ {diff[:5]}")
