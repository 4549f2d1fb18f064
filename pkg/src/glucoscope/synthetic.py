"""Synthetic CGM series generator.

Glucose is an additive kernel model: basal level, a 24 h circadian sine,
meal responses (difference of exponentials, peak ~26 min, mostly gone after
3 h), hypoglycaemic dips, and white noise, clipped to the 40-400 mg/dL range
commercial sensors report.

Hypoglycaemic dips arrive as a Poisson process whose daily rate is modulated
by a two-state (low/high risk) Markov chain, so lows cluster over
consecutive days the way they do in real patients. High-risk days also carry
shallower "near miss" dips.

All randomness comes from SplitMix64 (Steele, Lea & Flood 2014), implemented
here so output is bit-identical on every platform and numpy version.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cgm_data import GlucoseSeries
from .errors import PreconditionError

MASK64 = (1 << 64) - 1
SAMPLES_PER_DAY = 96
INTERVAL_MIN = 15
CLIP_RANGE = (40.0, 400.0)
DEFAULT_START = 1609718400  # 2021-01-04T00:00:00Z

MEAL_RISE_MIN = 12.0
MEAL_DECAY_MIN = 75.0
DIP_WIDTH_MIN = 40.0
RISK_STAY_PROB = 0.75
RISK_MULTIPLIER = (0.4, 1.6)  # low, high; stationary mean is 1


class SplitMix64:
    """64-bit SplitMix generator with the reference constants."""

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64
        self._spare: float | None = None

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return low + (high - low) * ((self.next_u64() >> 11) * 2.0**-53)

    def normal(self) -> float:
        # Box-Muller, both outputs used
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def exponential(self, rate: float) -> float:
        return -math.log(1.0 - self.uniform()) / rate


@dataclass(frozen=True)
class PatientProfile:
    basal_glucose: float = 120.0
    meal_times: tuple[float, ...] = (7.5, 13.0, 20.0)
    meal_amplitude: float = 60.0
    hypo_rate: float = 1.0
    noise_std: float = 5.0
    seed: int = 0
    circadian_amplitude: float = 10.0

    def __post_init__(self) -> None:
        if not 70.0 <= self.basal_glucose <= 180.0:
            raise PreconditionError("basal_glucose must be in [70, 180] mg/dL")
        if self.noise_std < 0 or self.hypo_rate < 0:
            raise PreconditionError("noise_std and hypo_rate must be non-negative")


def _meal_kernel(tau: np.ndarray) -> np.ndarray:
    tau = np.maximum(tau, 0.0)
    k = np.exp(-tau / MEAL_DECAY_MIN) - np.exp(-tau / MEAL_RISE_MIN)
    t_peak = (
        math.log(MEAL_DECAY_MIN / MEAL_RISE_MIN)
        * MEAL_RISE_MIN
        * MEAL_DECAY_MIN
        / (MEAL_DECAY_MIN - MEAL_RISE_MIN)
    )
    peak = math.exp(-t_peak / MEAL_DECAY_MIN) - math.exp(-t_peak / MEAL_RISE_MIN)
    return k / peak


def _dip_kernel(delta: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * (delta / DIP_WIDTH_MIN) ** 2)


def generate_series(
    profile: PatientProfile,
    days: int,
    patient_id: str = "synthetic",
    start: int = DEFAULT_START,
) -> GlucoseSeries:
    if days < 1:
        raise PreconditionError("days must be at least 1")
    rng = SplitMix64(profile.seed)
    n = days * SAMPLES_PER_DAY
    t_min = INTERVAL_MIN * np.arange(n, dtype=np.float64)

    # circadian peak near 05:00 (dawn phenomenon)
    base = profile.basal_glucose + profile.circadian_amplitude * np.sin(
        2.0 * math.pi * (t_min / 1440.0 - 5.0 / 24.0 + 0.25)
    )

    for day in range(days):
        for hour in profile.meal_times:
            if profile.meal_amplitude <= 0:
                continue
            onset = day * 1440.0 + hour * 60.0 + 20.0 * rng.normal()
            amp = profile.meal_amplitude * rng.uniform(0.7, 1.3)
            base = base + amp * _meal_kernel(t_min - onset)

    # clustered hypo process: daily risk state, then Poisson arrivals
    dips: list[tuple[float, float]] = []  # (centre minute, target trough mg/dL)
    if profile.hypo_rate > 0:
        high = rng.uniform() < 0.5
        for day in range(days):
            if day > 0 and rng.uniform() >= RISK_STAY_PROB:
                high = not high
            rate = profile.hypo_rate * RISK_MULTIPLIER[int(high)]
            t = rng.exponential(rate)
            while t < 1.0:
                dips.append((day * 1440.0 + t * 1440.0, rng.uniform(48.0, 62.0)))
                t += rng.exponential(rate)
            if high:
                t = rng.exponential(profile.hypo_rate)
                while t < 1.0:
                    dips.append((day * 1440.0 + t * 1440.0, rng.uniform(75.0, 90.0)))
                    t += rng.exponential(profile.hypo_rate)

    glucose = base.copy()
    for centre, target in dips:
        level = float(np.interp(centre, t_min, base))
        depth = max(level - target, 0.0)
        glucose -= depth * _dip_kernel(t_min - centre)

    if profile.noise_std > 0:
        noise = np.array([rng.normal() for _ in range(n)])
        glucose = glucose + profile.noise_std * noise

    glucose = np.round(np.clip(glucose, *CLIP_RANGE), 1)
    times = start + 60 * INTERVAL_MIN * np.arange(n, dtype=np.int64)
    return GlucoseSeries(patient_id, times, glucose, INTERVAL_MIN)


def cohort_profiles(seed: int, n_patients: int) -> list[PatientProfile]:
    if n_patients < 1:
        raise PreconditionError("n_patients must be at least 1")
    rng = SplitMix64(seed)
    profiles = []
    for _ in range(n_patients):
        meals = (
            round(7.5 + rng.uniform(-1.0, 1.0), 2),
            round(13.0 + rng.uniform(-1.0, 1.0), 2),
            round(20.0 + rng.uniform(-1.0, 1.0), 2),
        )
        profiles.append(
            PatientProfile(
                basal_glucose=round(rng.uniform(100.0, 140.0), 1),
                meal_times=meals,
                meal_amplitude=round(rng.uniform(40.0, 90.0), 1),
                hypo_rate=round(rng.uniform(0.3, 1.5), 3),
                noise_std=round(rng.uniform(3.0, 7.0), 2),
                seed=rng.next_u64(),
            )
        )
    return profiles


def generate_cohort(seed: int, n_patients: int = 4, days: int = 14) -> list[GlucoseSeries]:
    return [
        generate_series(profile, days, patient_id=f"P{i + 1}")
        for i, profile in enumerate(cohort_profiles(seed, n_patients))
    ]


def add_sensor_dropouts(
    series: GlucoseSeries,
    n_dropouts: int,
    seed: int,
    min_hours: float = 2.0,
    max_hours: float = 6.0,
) -> GlucoseSeries:
    """Delete ``n_dropouts`` random stretches of samples, mimicking sensor failures."""
    if n_dropouts <= 0:
        return series
    rng = SplitMix64(seed)
    n = len(series)
    keep = np.ones(n, dtype=bool)
    per_hour = 60 // series.nominal_interval
    for _ in range(n_dropouts):
        length = int(round(rng.uniform(min_hours, max_hours) * per_hour))
        if length >= n - 2:
            continue
        start = 1 + int(rng.uniform() * (n - length - 2))
        keep[start : start + length] = False
    return GlucoseSeries(series.patient_id, series.times[keep], series.values[keep], series.nominal_interval)


__all__ = [
    "SplitMix64",
    "PatientProfile",
    "generate_series",
    "generate_cohort",
    "cohort_profiles",
    "add_sensor_dropouts",
]
