import math
from importlib import resources

import numpy as np
import pytest
import scipy.stats as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from glucoscope.errors import DegenerateSample, InvalidDegreesOfFreedom, SampleTooLarge, SampleTooSmall
from glucoscope.stats import (
    betainc,
    compare_groups,
    f_cdf,
    f_sf,
    f_test,
    normal_cdf,
    population_std,
    shapiro_wilk,
    student_t_cdf,
    student_t_sf,
    t_test_unpaired,
)

VALIDATION = [78.13, 82.03, 81.25, 77.34, 80.47, 78.91, 79.69, 78.13, 84.38, 79.69]
TEST = [82.22, 75.56, 81.11, 81.11, 78.89, 77.78, 77.78, 76.67, 78.89, 77.78]


def test_fixture_file_matches_constants():
    text = resources.files("glucoscope").joinpath("data/table2.csv").read_text()
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    assert [float(r[2]) for r in rows] == VALIDATION
    assert [float(r[3]) for r in rows] == TEST


# -- shapiro-wilk


def test_table2_validation_is_normal():
    r = shapiro_wilk(VALIDATION)
    ref = sps.shapiro(VALIDATION)
    assert r.statistic == pytest.approx(ref.statistic, abs=1e-6)
    assert r.p_value == pytest.approx(ref.pvalue, abs=1e-6)
    assert r.p_value >= 0.05


def test_symmetric_three_points():
    r = shapiro_wilk([-1.0, 0.0, 1.0])
    assert r.statistic == pytest.approx(1.0)
    assert r.p_value > 0.5


def test_skewed_sample_rejected():
    sample = [1, 1, 1, 2, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233, 377, 610, 987, 1597, 2584]
    assert shapiro_wilk(sample).p_value < 0.01


def test_shapiro_matches_scipy_across_sizes():
    rng = np.random.default_rng(0)
    for n in range(3, 51):
        for dist in (rng.standard_normal, rng.exponential, rng.uniform):
            x = dist(size=n)
            r, ref = shapiro_wilk(x), sps.shapiro(x)
            assert r.statistic == pytest.approx(ref.statistic, abs=1e-6), n
            assert r.p_value == pytest.approx(ref.pvalue, abs=1e-5), n


def test_shapiro_domain():
    with pytest.raises(SampleTooSmall):
        shapiro_wilk([1.0, 2.0])
    with pytest.raises(SampleTooLarge):
        shapiro_wilk(range(51))
    with pytest.raises(DegenerateSample):
        shapiro_wilk([4.0] * 5)


# -- F test


def test_table2_variances_equal():
    r = f_test(VALIDATION, TEST)
    ref = 2 * min(sps.f.cdf(r.statistic, 9, 9), sps.f.sf(r.statistic, 9, 9))
    assert r.p_value == pytest.approx(ref, abs=1e-9)
    assert r.p_value > 0.9


def test_f_identical_samples():
    r = f_test(VALIDATION, VALIDATION)
    assert r.statistic == 1.0 and r.p_value == pytest.approx(1.0)


def test_f_hundredfold_variance():
    rng = np.random.default_rng(1)
    b = rng.standard_normal(10)
    a = 10 * rng.standard_normal(10)
    assert f_test(a, b).p_value < 0.001


# -- t test


def test_table2_means_not_different():
    r = t_test_unpaired(VALIDATION, TEST)
    ref = sps.ttest_ind(VALIDATION, TEST)
    assert r.statistic == pytest.approx(ref.statistic, abs=1e-9)
    assert r.p_value == pytest.approx(ref.pvalue, abs=1e-9)
    assert r.p_value > 0.05


def test_t_identical_samples():
    r = t_test_unpaired(VALIDATION, VALIDATION)
    assert r.statistic == 0.0 and r.p_value == pytest.approx(1.0)


def test_t_separated_means():
    rng = np.random.default_rng(2)
    assert t_test_unpaired(rng.normal(0, 1, 10), rng.normal(10, 1, 10)).p_value < 1e-6


def test_welch_matches_scipy():
    rng = np.random.default_rng(3)
    a, b = rng.normal(0, 1, 8), rng.normal(0.5, 3, 13)
    r = t_test_unpaired(a, b, pooled=False)
    assert r.p_value == pytest.approx(sps.ttest_ind(a, b, equal_var=False).pvalue, abs=1e-9)


def test_constant_samples():
    assert t_test_unpaired([1.0, 1.0], [1.0, 1.0]).p_value == 1.0
    with pytest.raises(DegenerateSample):
        t_test_unpaired([1.0, 1.0], [2.0, 2.0])
    with pytest.raises(SampleTooSmall):
        t_test_unpaired([1.0], [1.0, 2.0])


# -- distribution functions


def test_cdf_symmetry_points():
    assert normal_cdf(0) == 0.5
    assert student_t_cdf(0, 7) == 0.5
    assert f_cdf(1.0, 6, 6) == pytest.approx(0.5, abs=1e-12)


def test_t_cdf_reference_value():
    assert student_t_cdf(1.36, 18) == pytest.approx(0.9047, abs=1e-4)


def test_t_cdf_near_zero_keeps_precision():
    # found by hypothesis: df/(df + x^2) rounds to 1 and cancels
    assert student_t_cdf(5.960464477539063e-08, 32.0) == pytest.approx(sps.t.cdf(5.960464477539063e-08, 32.0), abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30), st.floats(1, 200))
def test_t_cdf_matches_scipy(x, df):
    assert student_t_cdf(x, df) == pytest.approx(sps.t.cdf(x, df), abs=1e-9)
    assert student_t_sf(x, df) == pytest.approx(sps.t.sf(x, df), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 50), st.floats(1, 60), st.floats(1, 60))
def test_f_cdf_matches_scipy(x, d1, d2):
    assert f_cdf(x, d1, d2) == pytest.approx(sps.f.cdf(x, d1, d2), abs=1e-9)
    assert f_sf(x, d1, d2) == pytest.approx(sps.f.sf(x, d1, d2), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 100), st.floats(0.1, 100), st.floats(0, 1))
def test_betainc_matches_scipy(a, b, x):
    from scipy.special import betainc as ref

    assert betainc(a, b, x) == pytest.approx(ref(a, b, x), abs=1e-9)


def test_normal_cdf_tails():
    assert normal_cdf(-10) == pytest.approx(sps.norm.cdf(-10), rel=1e-10)
    assert normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-14)


def test_invalid_degrees_of_freedom():
    with pytest.raises(InvalidDegreesOfFreedom):
        student_t_cdf(1.0, 0.5)
    with pytest.raises(InvalidDegreesOfFreedom):
        f_cdf(1.0, 0, 3)


# -- composite


def test_compare_groups_and_population_std():
    res = compare_groups(VALIDATION, TEST)
    assert set(res) == {"shapiro_a", "shapiro_b", "f_test", "t_test"}
    assert population_std(VALIDATION) == pytest.approx(np.std(VALIDATION))
    assert round(population_std(VALIDATION), 2) == 2.01
    assert math.isclose(sum(VALIDATION) / 10, 80.002)
