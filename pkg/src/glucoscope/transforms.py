"""Glucose window to image transforms.

Two transforms are available behind :class:`TransformConfig`:

* ``scalogram``: magnitude of a Morlet continuous wavelet transform over a
  geometric ladder of scales (the default).
* ``gaf``: Gramian angular summation field.

Either matrix is min-max scaled, bilinearly resized and coloured into an
``H x W x 3`` float image in ``[0, 1]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NonFiniteInput, PreconditionError, ScaleOutOfRange, ValueOutOfRange

GLUCOSE_RANGE = (40.0, 400.0)

# 11 evenly spaced samples of matplotlib's viridis
_VIRIDIS = np.array(
    [
        [0.267004, 0.004874, 0.329415],
        [0.282623, 0.140926, 0.457517],
        [0.253935, 0.265254, 0.529983],
        [0.206756, 0.371758, 0.553117],
        [0.163625, 0.471133, 0.558148],
        [0.127568, 0.566949, 0.550556],
        [0.134692, 0.658636, 0.517649],
        [0.266941, 0.748751, 0.440573],
        [0.477504, 0.821444, 0.318195],
        [0.741388, 0.873449, 0.149561],
        [0.993248, 0.906157, 0.143936],
    ]
)


class TransformKind(str, enum.Enum):
    SCALOGRAM = "scalogram"
    GAF = "gaf"


class Colormap(str, enum.Enum):
    GRAYSCALE3 = "grayscale3"
    VIRIDIS = "viridis"


@dataclass(frozen=True)
class TransformConfig:
    kind: TransformKind = TransformKind.SCALOGRAM
    n_scales: int = 64
    morlet_omega0: float = 6.0
    colormap: Colormap = Colormap.GRAYSCALE3
    glucose_range: tuple[float, float] = GLUCOSE_RANGE
    image_size: int = 224

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TransformKind(self.kind))
        object.__setattr__(self, "colormap", Colormap(self.colormap))
        object.__setattr__(self, "glucose_range", tuple(float(v) for v in self.glucose_range))
        if self.n_scales < 2:
            raise PreconditionError("n_scales must be at least 2")
        if self.morlet_omega0 < 5:
            raise PreconditionError("morlet_omega0 must be at least 5")
        lo, hi = self.glucose_range
        if not lo < hi:
            raise PreconditionError("glucose_range must be increasing")
        if self.image_size < 1:
            raise PreconditionError("image_size must be positive")


@dataclass
class Scalogram:
    magnitudes: np.ndarray  # scales x time
    scales: np.ndarray


def morlet(u: np.ndarray, omega0: float = 6.0) -> np.ndarray:
    """Morlet mother wavelet pi^-1/4 exp(i omega0 u) exp(-u^2/2) (no correction term)."""
    u = np.asarray(u, dtype=float)
    return np.pi**-0.25 * np.exp(1j * omega0 * u - 0.5 * u * u)


def _check_cwt_args(x: np.ndarray, scales: np.ndarray) -> None:
    if x.ndim != 1 or x.size < 8:
        raise PreconditionError("cwt needs a 1-D signal of at least 8 samples")
    if np.any(scales <= 0):
        raise PreconditionError("scales must be positive")
    # effective support of the dilated wavelet is |u| <= 4, i.e. 8a samples
    if np.any(8.0 * scales > 4 * x.size):
        raise ScaleOutOfRange(f"wavelet support exceeds 4N for N={x.size}")


def cwt(signal: Sequence[float], scales: Sequence[float], omega0: float = 6.0) -> np.ndarray:
    """Continuous wavelet transform, ``W[a, b] = a^-1/2 sum_t x[t] conj(psi((t - b) / a))``.

    Each row is a cross-correlation of the signal with the dilated wavelet,
    done by FFT on a zero-padded grid so that no circular wrap-around enters
    the sum: the result equals the direct finite sum over ``t in [0, N)``.
    """
    x = np.asarray(signal, dtype=float)
    scales = np.atleast_1d(np.asarray(scales, dtype=float))
    _check_cwt_args(x, scales)
    n = x.size
    size = 1 << (2 * n - 1).bit_length()
    lags = np.arange(-(n - 1), n)  # d = t - b
    x_f = np.fft.fft(x, size)
    out = np.empty((scales.size, n), dtype=complex)
    for i, a in enumerate(scales):
        h = np.conj(morlet(lags / a, omega0)) / math.sqrt(a)
        # W[b] = sum_t x[t] h[t - b] is a convolution of x with g[k] = h[-k]
        g_rev = h[::-1]
        g = np.zeros(size, dtype=complex)
        g[:n] = g_rev[n - 1 :]
        g[size - (n - 1) :] = g_rev[: n - 1]
        corr = np.fft.ifft(x_f * np.fft.fft(g))
        out[i] = corr[:n]
    return out


def cwt_direct(signal: Sequence[float], scales: Sequence[float], omega0: float = 6.0) -> np.ndarray:
    """O(N^2) reference summation of :func:`cwt`."""
    x = np.asarray(signal, dtype=float)
    scales = np.atleast_1d(np.asarray(scales, dtype=float))
    _check_cwt_args(x, scales)
    n = x.size
    out = np.zeros((scales.size, n), dtype=complex)
    for i, a in enumerate(scales):
        for b in range(n):
            acc = 0j
            for t in range(n):
                acc += x[t] * np.conj(morlet((t - b) / a, omega0))
            out[i, b] = acc / math.sqrt(a)
    return out


def scale_ladder(n_samples: int, n_scales: int) -> np.ndarray:
    """Geometric scales from 2 samples to ``n_samples / 2``."""
    return np.geomspace(2.0, n_samples / 2.0, n_scales)


def peak_scale(period: float, omega0: float = 6.0) -> float:
    """Scale at which the Morlet response to a sinusoid of ``period`` samples peaks."""
    return (omega0 + math.sqrt(2.0 + omega0**2)) / (4.0 * math.pi) * period


def scalogram(signal: Sequence[float], config: TransformConfig = TransformConfig()) -> Scalogram:
    """|CWT| of the mean-removed signal over the default scale ladder."""
    x = np.asarray(signal, dtype=float)
    x = x - x.mean()
    scales = scale_ladder(x.size, config.n_scales)
    return Scalogram(np.abs(cwt(x, scales, config.morlet_omega0)), scales)


def _unit_interval(values: np.ndarray, value_range: tuple[float, float]) -> np.ndarray:
    lo, hi = value_range
    return (np.clip(values, lo, hi) - lo) / (hi - lo)


def normalize_glucose(values: Sequence[float], value_range: tuple[float, float] = GLUCOSE_RANGE) -> np.ndarray:
    """Clip to ``value_range`` then map affinely onto [0, 1]."""
    return _unit_interval(np.asarray(values, dtype=float), value_range)


def gaf(signal: Sequence[float], config: TransformConfig = TransformConfig()) -> np.ndarray:
    """Gramian angular summation field ``G[i, j] = cos(phi_i + phi_j)``.

    Values are rescaled from ``config.glucose_range`` to [-1, 1] before the
    polar encoding ``phi = arccos(x)``.
    """
    v = np.asarray(signal, dtype=float)
    lo, hi = config.glucose_range
    if not np.all(np.isfinite(v)) or np.any((v < lo) | (v > hi)):
        raise ValueOutOfRange(f"gaf input must lie within {config.glucose_range}")
    x = np.clip(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0, 1.0)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    # cos(a + b) = cos a cos b - sin a sin b with sin(arccos x) = sqrt(1 - x^2)
    return np.outer(x, x) - np.outer(s, s)


def resize_bilinear(matrix: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize with corner pixels aligned to corner pixels."""
    m = np.asarray(matrix, dtype=float)
    h_in, w_in = m.shape

    def coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if n_out == 1 or n_in == 1:
            pos = np.zeros(n_out)
        else:
            pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        i0 = np.minimum(np.floor(pos).astype(int), n_in - 1)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    y0, y1, fy = coords(height, h_in)
    x0, x1, fx = coords(width, w_in)
    top = m[y0][:, x0] * (1 - fx) + m[y0][:, x1] * fx
    bottom = m[y1][:, x0] * (1 - fx) + m[y1][:, x1] * fx
    return top * (1 - fy)[:, None] + bottom * fy[:, None]


def apply_colormap(unit: np.ndarray, colormap: Colormap = Colormap.GRAYSCALE3) -> np.ndarray:
    colormap = Colormap(colormap)
    if colormap is Colormap.GRAYSCALE3:
        return np.repeat(unit[..., None], 3, axis=-1)
    pos = unit * (len(_VIRIDIS) - 1)
    idx = np.minimum(np.floor(pos).astype(int), len(_VIRIDIS) - 2)
    frac = (pos - idx)[..., None]
    rgb = _VIRIDIS[idx] * (1 - frac) + _VIRIDIS[idx + 1] * frac
    return np.clip(rgb, 0.0, 1.0)


def to_image(matrix: np.ndarray, config: TransformConfig = TransformConfig()) -> np.ndarray:
    """Min-max scale, resize to ``config.image_size`` square and colour to 3 channels.

    A constant matrix maps to a uniform 0.5 image.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise PreconditionError("to_image expects a 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise NonFiniteInput("matrix contains NaN or infinity")
    lo, hi = m.min(), m.max()
    unit = np.full_like(m, 0.5) if hi == lo else (m - lo) / (hi - lo)
    if unit.shape != (config.image_size, config.image_size):
        unit = resize_bilinear(unit, config.image_size, config.image_size)
    return apply_colormap(np.clip(unit, 0.0, 1.0), config.colormap)


def transform_window(values: Sequence[float], config: TransformConfig = TransformConfig()) -> np.ndarray:
    """Full window to image path used for training data."""
    v = np.asarray(values, dtype=float)
    if config.kind is TransformKind.SCALOGRAM:
        matrix = scalogram(normalize_glucose(v, config.glucose_range), config).magnitudes
    else:
        matrix = gaf(np.clip(v, *config.glucose_range), config)
    return to_image(matrix, config)


def transform_batch(windows: Sequence[Sequence[float]], config: TransformConfig = TransformConfig(),
                    dtype=np.float32) -> np.ndarray:
    return np.stack([transform_window(w, config).astype(dtype) for w in windows]) if len(windows) else \
        np.zeros((0, config.image_size, config.image_size, 3), dtype=dtype)


def save_png(image: np.ndarray, path: str | Path) -> None:
    """8-bit RGB export, ``round(v * 255)`` per channel."""
    from PIL import Image

    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)
