"""Layer primitives with hand-derived gradients.

Tensors are plain numpy arrays in NHWC layout. Every layer caches what its
backward pass needs during ``forward`` and exposes ``params`` / ``grads``
dicts with matching keys and shapes. Gradient tests run in float64; training
runs in float32.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import BatchTooSmall, InvalidOneHot, ShapeMismatch


def _out_size(n: int, k: int, stride: int, pad: int) -> int:
    if n + 2 * pad < k:
        raise ShapeMismatch(f"kernel {k} larger than padded input {n + 2 * pad}")
    return (n + 2 * pad - k) // stride + 1


def _pad(x: np.ndarray, pad: int, value: float = 0.0) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)), constant_values=value)


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Patches as a ``(B, H', W', kh, kw, C)`` array (a copy, C-contiguous)."""
    xp = _pad(x, pad)
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


def col2im(cols: np.ndarray, x_shape: tuple, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    b, h, w, c = x_shape
    ho, wo = cols.shape[1], cols.shape[2]
    dxp = np.zeros((b, h + 2 * pad, w + 2 * pad, c), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += cols[:, :, :, i, j, :]
    if pad:
        return dxp[:, pad:-pad, pad:-pad, :]
    return dxp


def conv2d(x: np.ndarray, kernel: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation (no kernel flip) of ``B x H x W x C`` with ``kh x kw x C x F``."""
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[3] != kernel.shape[2]:
        raise ShapeMismatch(f"conv2d input {x.shape} incompatible with kernel {kernel.shape}")
    if stride < 1:
        raise ShapeMismatch("stride must be at least 1")
    kh, kw, c, f = kernel.shape
    b, h, w, _ = x.shape
    ho, wo = _out_size(h, kh, stride, padding), _out_size(w, kw, stride, padding)
    if kh == 1 and kw == 1 and padding == 0:
        xs = x[:, ::stride, ::stride, :] if stride > 1 else x
        return (xs.reshape(-1, c) @ kernel.reshape(c, f)).reshape(b, ho, wo, f)
    cols = im2col(x, kh, kw, stride, padding)
    return (cols.reshape(b * ho * wo, -1) @ kernel.reshape(-1, f)).reshape(b, ho, wo, f)


def conv2d_naive(x: np.ndarray, kernel: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Explicit-loop reference for :func:`conv2d`."""
    kh, kw, c, f = kernel.shape
    b, h, w, _ = x.shape
    xp = _pad(x, padding)
    ho, wo = _out_size(h, kh, stride, padding), _out_size(w, kw, stride, padding)
    out = np.zeros((b, ho, wo, f), dtype=np.result_type(x, kernel))
    for n in range(b):
        for i in range(ho):
            for j in range(wo):
                for o in range(f):
                    acc = 0.0
                    for di in range(kh):
                        for dj in range(kw):
                            for ch in range(c):
                                acc += xp[n, i * stride + di, j * stride + dj, ch] * kernel[di, dj, ch, o]
                    out[n, i, j, o] = acc
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def _pool_windows(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    _out_size(x.shape[1], k, stride, pad)
    _out_size(x.shape[2], k, stride, pad)
    xp = _pad(x, pad, -np.inf) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    return win.reshape(*win.shape[:4], k * k)  # B, H', W', C, k*k


def maxpool(x: np.ndarray, k: int = 2, stride: int | None = None, padding: int = 0) -> np.ndarray:
    stride = stride or k
    return _pool_windows(x, k, stride, padding).max(axis=-1)


def maxpool2x2(x: np.ndarray) -> np.ndarray:
    return maxpool(x, 2, 2)


def avgpool(x: np.ndarray, k: int) -> np.ndarray:
    """Non-overlapping ``k x k`` mean pooling; ``k`` must divide both spatial dims."""
    b, h, w, c = x.shape
    if h % k or w % k:
        raise ShapeMismatch(f"pool size {k} does not divide {h}x{w}")
    return x.reshape(b, h // k, k, w // k, k, c).mean(axis=(2, 4))


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0] or bias.shape != (weights.shape[1],):
        raise ShapeMismatch(f"dense shapes {x.shape}, {weights.shape}, {bias.shape} do not conform")
    return x @ weights + bias


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, onehot: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy and softmax probabilities.

    The combined gradient w.r.t. the logits is ``(probs - onehot) / B``.
    """
    if logits.shape != onehot.shape or logits.ndim != 2:
        raise ShapeMismatch(f"logits {logits.shape} vs onehot {onehot.shape}")
    if np.any(onehot < 0) or not np.allclose(onehot.sum(axis=1), 1.0):
        raise InvalidOneHot("each target row must be a distribution summing to 1")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_norm
    loss = float(-(onehot * log_p).sum() / logits.shape[0])
    return max(loss, 0.0), np.exp(log_p)


def softmax_cross_entropy_grad(probs: np.ndarray, onehot: np.ndarray) -> np.ndarray:
    return (probs - onehot) / probs.shape[0]


def one_hot(labels: np.ndarray, k: int = 2, dtype=np.float64) -> np.ndarray:
    out = np.zeros((len(labels), k), dtype=dtype)
    out[np.arange(len(labels)), np.asarray(labels, dtype=int)] = 1
    return out


# --------------------------------------------------------------------- layers


class Layer:
    """Base: stateless layers keep empty ``params`` / ``grads``."""

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


class Conv2D(Layer):
    def __init__(self, kernel: np.ndarray, stride: int = 1, padding: int = 0, input_grad: bool = True):
        super().__init__()
        self.params["kernel"] = kernel
        self.grads["kernel"] = np.zeros_like(kernel)
        self.stride, self.padding = stride, padding
        self.input_grad = input_grad

    @property
    def in_channels(self) -> int:
        return self.params["kernel"].shape[2]

    @property
    def out_channels(self) -> int:
        return self.params["kernel"].shape[3]

    def forward(self, x, training=False):
        k = self.params["kernel"]
        kh, kw, c, f = k.shape
        if x.ndim != 4 or x.shape[3] != c:
            raise ShapeMismatch(f"conv expects {c} input channels, got shape {x.shape}")
        b, h, w, _ = x.shape
        ho = _out_size(h, kh, self.stride, self.padding)
        wo = _out_size(w, kw, self.stride, self.padding)
        if kh == 1 and kw == 1 and self.padding == 0:
            xs = x[:, :: self.stride, :: self.stride, :] if self.stride > 1 else x
            cols = np.ascontiguousarray(xs).reshape(-1, c)
        else:
            cols = im2col(x, kh, kw, self.stride, self.padding).reshape(b * ho * wo, -1)
        self._cache = (x.shape, cols, ho, wo)
        return (cols @ k.reshape(-1, f)).reshape(b, ho, wo, f)

    def backward(self, dout):
        k = self.params["kernel"]
        kh, kw, c, f = k.shape
        x_shape, cols, ho, wo = self._cache
        d2 = dout.reshape(-1, f)
        self.grads["kernel"][...] = (cols.T @ d2).reshape(k.shape)
        if not self.input_grad:
            return None
        b = x_shape[0]
        if self.stride == 1 and (kh > 1 or kw > 1) and f < c:
            # full correlation of the output gradient with the flipped kernel; cheaper when F < C
            flipped = k[::-1, ::-1].transpose(0, 1, 3, 2)
            dpad = np.pad(dout, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
            full = conv2d(dpad, np.ascontiguousarray(flipped))
            p = self.padding
            return full[:, p : p + x_shape[1], p : p + x_shape[2], :]
        dcols = d2 @ k.reshape(-1, f).T
        if kh == 1 and kw == 1 and self.padding == 0:
            if self.stride == 1:
                return dcols.reshape(x_shape)
            dx = np.zeros(x_shape, dtype=dcols.dtype)
            dx[:, :: self.stride, :: self.stride, :] = dcols.reshape(b, ho, wo, c)
            return dx
        return col2im(dcols.reshape(b, ho, wo, kh, kw, c), x_shape, kh, kw, self.stride, self.padding)

    def describe(self):
        kh, kw, c, f = self.params["kernel"].shape
        return f"Conv2D {kh}x{kw} {c}->{f} stride={self.stride} pad={self.padding}"


class BatchNorm(Layer):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9, dtype=np.float32):
        super().__init__()
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.grads["gamma"] = np.zeros(channels, dtype=dtype)
        self.grads["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)
        self.eps, self.momentum = eps, momentum

    def forward(self, x, training=False):
        c = self.params["gamma"].shape[0]
        if x.shape[-1] != c:
            raise ShapeMismatch(f"batchnorm expects {c} channels, got {x.shape[-1]}")
        shape = x.shape
        x2 = x.reshape(-1, c)
        if training:
            if shape[0] < 2:
                raise BatchTooSmall("batch normalisation in train mode needs at least 2 samples")
            mean = x2.mean(axis=0)
            xc = x2 - mean
            var = np.einsum("ij,ij->j", xc, xc) / x2.shape[0]
            m = self.momentum
            self.buffers["running_mean"][...] = m * self.buffers["running_mean"] + (1 - m) * mean
            self.buffers["running_var"][...] = m * self.buffers["running_var"] + (1 - m) * var
        else:
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
            xc = x2 - mean
        inv_std = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        xhat = xc * inv_std
        self._cache = (xhat, inv_std)
        return (xhat * self.params["gamma"] + self.params["beta"]).reshape(shape)

    def backward(self, dout):
        xhat, inv_std = self._cache
        shape = dout.shape
        d2 = dout.reshape(xhat.shape)
        n = xhat.shape[0]
        gamma = self.params["gamma"]
        dbeta = d2.sum(axis=0)
        dgamma = np.einsum("ij,ij->j", d2, xhat)
        self.grads["beta"][...] = dbeta
        self.grads["gamma"][...] = dgamma
        # train-mode gradient; batch statistics depend on x
        scale = gamma * inv_std / n
        return (scale * (n * d2 - dbeta - xhat * dgamma)).reshape(shape)

    def describe(self):
        return f"BatchNorm {self.params['gamma'].shape[0]}"


class ReLU(Layer):
    def forward(self, x, training=False):
        self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._mask


class MaxPool(Layer):
    """Max pooling; ties resolve to the first element in row-major window order."""

    def __init__(self, k: int = 2, stride: int | None = None, padding: int = 0):
        super().__init__()
        self.k, self.stride, self.padding = k, stride or k, padding

    def forward(self, x, training=False):
        k, st, p = self.k, self.stride, self.padding
        b, h, w, c = x.shape
        ho, wo = _out_size(h, k, st, p), _out_size(w, k, st, p)
        xp = _pad(x, p, -np.inf)
        out = xp[:, : st * ho : st, : st * wo : st, :].copy()
        for i in range(k):
            for j in range(k):
                np.maximum(out, xp[:, i : i + st * ho : st, j : j + st * wo : st, :], out=out)
        self._cache = (x.shape, xp, out)
        return out

    def backward(self, dout):
        x_shape, xp, out = self._cache
        b, h, w, c = x_shape
        k, s, p = self.k, self.stride, self.padding
        ho, wo = out.shape[1], out.shape[2]
        dxp = np.zeros(xp.shape, dtype=dout.dtype)
        taken = np.zeros(out.shape, dtype=bool)
        # first matching offset in row-major order receives the gradient
        for i in range(k):
            for j in range(k):
                hit = xp[:, i : i + s * ho : s, j : j + s * wo : s, :] == out
                hit &= ~taken
                taken |= hit
                dxp[:, i : i + s * ho : s, j : j + s * wo : s, :] += dout * hit
        return dxp[:, p : p + h, p : p + w, :]

    def describe(self):
        return f"MaxPool {self.k}x{self.k} stride={self.stride} pad={self.padding}"


class AvgPool(Layer):
    """Non-overlapping mean pooling (``stride == k``)."""

    def __init__(self, k: int = 2):
        super().__init__()
        self.k = k

    def forward(self, x, training=False):
        self._shape = x.shape
        return avgpool(x, self.k)

    def backward(self, dout):
        k = self.k
        g = dout / (k * k)
        return np.repeat(np.repeat(g, k, axis=1), k, axis=2)

    def describe(self):
        return f"AvgPool {self.k}x{self.k}"


class GlobalAvgPool(Layer):
    """Average over the full ``size x size`` spatial extent, returning ``B x C``."""

    def __init__(self, size: int | None = None):
        super().__init__()
        self.size = size

    def forward(self, x, training=False):
        if self.size is not None and x.shape[1:3] != (self.size, self.size):
            raise ShapeMismatch(f"expected {self.size}x{self.size} feature maps, got {x.shape[1:3]}")
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dout):
        b, h, w, c = self._shape
        return np.broadcast_to((dout / (h * w))[:, None, None, :], self._shape).copy()

    def describe(self):
        return f"AvgPool {self.size}x{self.size} (global)" if self.size else "GlobalAvgPool"


class Dense(Layer):
    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        super().__init__()
        self.params["weights"] = weights
        self.params["bias"] = bias
        self.grads["weights"] = np.zeros_like(weights)
        self.grads["bias"] = np.zeros_like(bias)

    def forward(self, x, training=False):
        self._x = x
        return dense(x, self.params["weights"], self.params["bias"])

    def backward(self, dout):
        self.grads["weights"][...] = self._x.T @ dout
        self.grads["bias"][...] = dout.sum(axis=0)
        return dout @ self.params["weights"].T

    def describe(self):
        d, u = self.params["weights"].shape
        return f"Dense {d}->{u}"
