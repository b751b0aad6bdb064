"""Dense tensor numerics on top of numpy.

Tensors are plain ``numpy.ndarray`` values. Every function here is pure:
inputs are never modified and a fresh array is returned. Computations run in
float64 unless the caller passes float32 data.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, ParameterError

LN_EPS = 1e-5


def as_tensor(x, dtype=np.float64) -> np.ndarray:
    return np.asarray(x, dtype=dtype)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of an ``M x K`` and a ``K x N`` array."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def conv_windows(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    """Strided view of all ``k x k`` windows, shape ``(Cin, H', W', k, k)``."""
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(1, 2))
    return win[:, ::stride, ::stride]


def _check_conv(x, w, bias, stride, padding):
    if x.ndim != 3:
        raise DimensionError(f"conv2d input must be Cin x H x W, got {x.shape}")
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise DimensionError(f"conv2d weight must be Cout x Cin x k x k, got {w.shape}")
    if w.shape[1] != x.shape[0]:
        raise DimensionError(f"weight expects {w.shape[1]} input channels, input has {x.shape[0]}")
    if bias is not None and np.shape(bias) != (w.shape[0],):
        raise DimensionError(f"bias shape {np.shape(bias)} does not match {w.shape[0]} outputs")
    if stride < 1 or padding < 0:
        raise ParameterError(f"invalid stride={stride} / padding={padding}")
    k = w.shape[2]
    if k < 1:
        raise DimensionError("kernel size must be at least 1")
    h, wd = x.shape[1:]
    if h + 2 * padding < k or wd + 2 * padding < k:
        raise DimensionError(
            f"kernel {k}x{k} larger than padded input {h + 2 * padding}x{wd + 2 * padding}"
        )


def conv2d(x, w, bias=None, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation of a ``Cin x H x W`` input with ``Cout x Cin x k x k`` kernels.

    Zero padding is applied symmetrically. Output spatial size follows
    ``floor((H + 2*padding - k) / stride) + 1``.
    """
    x = np.asarray(x)
    w = np.asarray(w)
    _check_conv(x, w, bias, stride, padding)
    win = conv_windows(x, w.shape[2], stride, padding)
    out = np.tensordot(w, win, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        out = out + np.asarray(bias)[:, None, None]
    return out


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Mean over the spatial axes of a ``C x H x W`` array."""
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[1] < 1 or x.shape[2] < 1:
        raise DimensionError(f"global_avg_pool expects C x H x W with H,W >= 1, got {x.shape}")
    return x.mean(axis=(1, 2))


def avg_pool(x: np.ndarray, factor: int) -> np.ndarray:
    """Non-overlapping ``factor x factor`` average pooling in ceil mode.

    Odd trailing rows/columns are zero padded and the window is always divided
    by ``factor**2``.
    """
    x = np.asarray(x)
    if factor < 1:
        raise ParameterError(f"pooling factor must be >= 1, got {factor}")
    if factor == 1:
        return x.copy()
    c, h, w = x.shape
    ho, wo = -(-h // factor), -(-w // factor)
    xp = np.pad(x, ((0, 0), (0, ho * factor - h), (0, wo * factor - w)))
    return xp.reshape(c, ho, factor, wo, factor).sum(axis=(2, 4)) / (factor * factor)


def layer_norm(x, gamma, beta, eps: float = LN_EPS) -> np.ndarray:
    """Normalize over the last axis with biased variance, then scale and shift."""
    x = np.asarray(x)
    if x.shape[-1] == 0:
        raise DimensionError("layer_norm over an empty channel axis")
    if np.shape(gamma) != (x.shape[-1],) or np.shape(beta) != (x.shape[-1],):
        raise DimensionError(
            f"gamma/beta must have shape ({x.shape[-1]},), got {np.shape(gamma)}, {np.shape(beta)}"
        )
    if eps <= 0:
        raise ParameterError("eps must be positive")
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x):
    """Tanh approximation of GELU."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x**3)))


def gelu_grad(x):
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
