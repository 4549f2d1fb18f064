"""Normality, variance-ratio and two-sample mean tests in pure Python.

* Shapiro-Wilk W with Royston's polynomial approximations for the
  coefficients and for the p-value (algorithm AS R94), for 3 <= n <= 50.
* Two-sided F test of equal variances.
* Unpaired Student t test (pooled variance) or Welch's variant.

Distribution functions go through the regularised incomplete beta function,
evaluated with the modified Lentz continued fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

from .errors import DegenerateSample, InvalidDegreesOfFreedom, SampleTooLarge, SampleTooSmall

CF_TOL = 1e-10
CF_MAX_ITER = 500
_TINY = 1e-300


@dataclass(frozen=True)
class StatResult:
    statistic: float
    p_value: float
    test_name: str
    n1: int
    n2: int = 0


# ------------------------------------------------------------- special functions


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b) (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < CF_TOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _check_df(*dfs: float) -> None:
    for df in dfs:
        if not df >= 1:
            raise InvalidDegreesOfFreedom(f"degrees of freedom must be >= 1, got {df}")


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _t_tail(x: float, df: float) -> float:
    """P(T > x) for x >= 0; near zero use the complementary beta argument to avoid cancellation."""
    z = x * x
    if z < df:
        return 0.5 - 0.5 * betainc(0.5, df / 2.0, z / (df + z))
    return 0.5 * betainc(df / 2.0, 0.5, df / (df + z))


def student_t_sf(x: float, df: float) -> float:
    """Upper tail P(T > x)."""
    _check_df(df)
    tail = _t_tail(abs(x), df)
    return tail if x >= 0 else 1.0 - tail


def student_t_cdf(x: float, df: float) -> float:
    _check_df(df)
    tail = _t_tail(abs(x), df)
    return 1.0 - tail if x > 0 else tail


def f_cdf(x: float, df1: float, df2: float) -> float:
    _check_df(df1, df2)
    if x <= 0:
        return 0.0
    return betainc(df1 / 2.0, df2 / 2.0, df1 * x / (df1 * x + df2))


def f_sf(x: float, df1: float, df2: float) -> float:
    _check_df(df1, df2)
    if x <= 0:
        return 1.0
    return betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * x))


# ----------------------------------------------------------------- sample helpers


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _var(xs: Sequence[float]) -> float:
    """Unbiased sample variance."""
    m = _mean(xs)
    return math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def _clip01(p: float) -> float:
    return min(1.0, max(0.0, p))


# ------------------------------------------------------------------ Shapiro-Wilk

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef: Sequence[float], x: float) -> float:
    result = 0.0
    for c in reversed(coef):
        result = result * x + c
    return result


def shapiro_wilk_coefficients(n: int) -> list[float]:
    """Royston's approximation to the Shapiro-Wilk weights, ascending order, antisymmetric."""
    half = n // 2
    if n == 3:
        a_half = [math.sqrt(0.5)]
    else:
        inv = NormalDist().inv_cdf
        m = [inv((i - 0.375) / (n + 0.25)) for i in range(1, half + 1)]  # negative scores
        summ2 = 2.0 * math.fsum(v * v for v in m)
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a1 = _poly(_C1, rsn) - m[0] / ssumm2
        if n > 5:
            a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2) / (1.0 - 2.0 * a1**2 - 2.0 * a2**2))
            a_half = [a1, a2] + [-m[i] / fac for i in range(2, half)]
        else:
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1**2))
            a_half = [a1] + [-m[i] / fac for i in range(1, half)]
    # a_half are the (positive) weights of the largest order statistics
    lower = [-v for v in a_half]
    middle = [0.0] if n % 2 else []
    return lower + middle + list(reversed(a_half))


def shapiro_wilk(sample: Sequence[float]) -> StatResult:
    x = sorted(float(v) for v in sample)
    n = len(x)
    if n < 3:
        raise SampleTooSmall("Shapiro-Wilk needs at least 3 observations")
    if n > 50:
        raise SampleTooLarge("this Shapiro-Wilk implementation covers n <= 50")
    if x[-1] - x[0] <= 0:
        raise DegenerateSample("all observations are identical")

    a = shapiro_wilk_coefficients(n)
    m = _mean(x)
    ssq = math.fsum((v - m) ** 2 for v in x)
    w = min(1.0, math.fsum(ai * xi for ai, xi in zip(a, x)) ** 2 / ssq)

    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return StatResult(w, _clip01(p), "shapiro-wilk", n)

    if w >= 1.0:
        return StatResult(w, 1.0, "shapiro-wilk", n)
    y = math.log(1.0 - w)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return StatResult(w, 1e-99, "shapiro-wilk", n)
        y = -math.log(gamma - y)
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
    else:
        ln_n = math.log(n)
        mu = _poly(_C5, ln_n)
        sigma = math.exp(_poly(_C6, ln_n))
    p = 1.0 - normal_cdf((y - mu) / sigma)
    return StatResult(w, _clip01(p), "shapiro-wilk", n)


# --------------------------------------------------------------- two-sample tests


def f_test(a: Sequence[float], b: Sequence[float]) -> StatResult:
    """Two-sided F test of ``var(a) == var(b)``; statistic is var(a) / var(b)."""
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise SampleTooSmall("F test needs at least two observations per sample")
    va, vb = _var(a), _var(b)
    if va <= 0 or vb <= 0:
        raise DegenerateSample("F test needs non-zero variance in both samples")
    f = va / vb
    d1, d2 = n1 - 1, n2 - 1
    p = 2.0 * min(f_cdf(f, d1, d2), f_sf(f, d1, d2))
    return StatResult(f, _clip01(p), "f-test", n1, n2)


def t_test_unpaired(a: Sequence[float], b: Sequence[float], pooled: bool = True) -> StatResult:
    """Two-sided two-sample t test; Student (pooled) by default, Welch otherwise.

    When both samples have zero variance, equal means give t = 0, p = 1 and
    unequal means raise :class:`DegenerateSample`.
    """
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise SampleTooSmall("t test needs at least two observations per sample")
    m1, m2 = _mean(a), _mean(b)
    v1, v2 = _var(a), _var(b)
    name = "student-t" if pooled else "welch-t"
    if v1 == 0 and v2 == 0:
        if m1 == m2:
            return StatResult(0.0, 1.0, name, n1, n2)
        raise DegenerateSample("both samples are constant with different means")
    if pooled:
        df = n1 + n2 - 2
        sp2 = ((n1 - 1) * v1 + (n2 - 1) * v2) / df
        se = math.sqrt(sp2 * (1.0 / n1 + 1.0 / n2))
    else:
        q1, q2 = v1 / n1, v2 / n2
        se = math.sqrt(q1 + q2)
        df = (q1 + q2) ** 2 / (q1**2 / (n1 - 1) + q2**2 / (n2 - 1))
    t = (m1 - m2) / se
    p = 2.0 * student_t_sf(abs(t), df)
    return StatResult(t, _clip01(p), name, n1, n2)


def compare_groups(a: Sequence[float], b: Sequence[float]) -> dict[str, StatResult]:
    """Shapiro-Wilk on each group, then the F test, then the pooled t test."""
    return {
        "shapiro_a": shapiro_wilk(a),
        "shapiro_b": shapiro_wilk(b),
        "f_test": f_test(a, b),
        "t_test": t_test_unpaired(a, b, pooled=True),
    }


def population_std(xs: Sequence[float]) -> float:
    m = _mean(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / len(xs))
