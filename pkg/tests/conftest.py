import sys

import numpy as np
import pytest

from glucoscope.synthetic import generate_cohort
from glucoscope.transforms import TransformConfig, transform_batch
from glucoscope.windowing import segment


@pytest.fixture(scope="session")
def cohort_windows():
    return [w for s in generate_cohort(1) for w in segment(s)]


@pytest.fixture(scope="session")
def balanced_images(cohort_windows):
    """200 images at 64 px, 100 per class, shuffled with a fixed seed."""
    rng = np.random.default_rng(0)
    labels = np.array([int(w.label) for w in cohort_windows])
    pick = np.concatenate([rng.choice(np.flatnonzero(labels == k), 100, replace=False) for k in (0, 1)])
    pick = rng.permutation(pick)
    chosen = [cohort_windows[i] for i in pick]
    images = transform_batch([w.input for w in chosen], TransformConfig(image_size=64))
    return images, labels[pick], np.array([w.patient_id for w in chosen])


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
