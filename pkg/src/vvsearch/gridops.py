"""Elementwise and windowed operations on 2D visibility matrices.

Matrices are indexed ``[ix, iy]``.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def _same_shape(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def hadamard(a, b) -> np.ndarray:
    """Elementwise product (intersection for binary inputs)."""
    a, b = _same_shape(a, b)
    return a * b


def saturate(a, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return np.clip(np.asarray(a), lo, hi)


def vv_union(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return saturate(a + b, 0, 1)


def convolve(kernel, field) -> np.ndarray:
    """Zero-padded cross-correlation: out[x] = sum_o K[o] * B[x + o].

    Offsets run over ``[-w, w]`` for a ``(2w+1) x (2w+1)`` kernel; indices
    falling outside the field contribute nothing.
    """
    k = np.asarray(kernel)
    f = np.asarray(field)
    if k.ndim != 2 or f.ndim != 2:
        raise ValueError("kernel and field must be 2D")
    if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ValueError(f"kernel must have odd dimensions, got {k.shape}")
    dtype = np.result_type(k.dtype, f.dtype, np.int64 if f.dtype == bool else f.dtype)
    return ndimage.correlate(f.astype(dtype), k.astype(dtype), mode="constant", cval=0)


def max_pool(a, stride: int) -> np.ndarray:
    """Block maximum over ``stride x stride`` tiles anchored at index 0.

    Trailing blocks are truncated at the matrix edge, giving
    ``ceil(n / stride)`` outputs per axis.
    """
    a = np.asarray(a)
    stride = int(stride)
    if stride <= 0:
        raise ValueError("stride must be >= 1")
    if stride == 1:
        return a.copy()
    nx, ny = a.shape
    px, py = -nx % stride, -ny % stride
    if a.dtype == bool:
        fill = False
    elif np.issubdtype(a.dtype, np.integer):
        fill = np.iinfo(a.dtype).min
    else:
        fill = -np.inf
    padded = np.pad(a, ((0, px), (0, py)), constant_values=fill)
    bx, by = padded.shape[0] // stride, padded.shape[1] // stride
    return padded.reshape(bx, stride, by, stride).max(axis=(1, 3))
