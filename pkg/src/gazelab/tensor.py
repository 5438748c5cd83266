"""Dense numeric kernels with hand-written backward passes.

Feature maps are ``float64`` numpy arrays laid out height x width x channels.
Kernels are stored as ``kh x kw x in_channels x out_channels`` plus a bias
vector.  Every function here is pure: inputs are never modified.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError


@dataclass
class KernelSet:
    """Convolution weights (kh, kw, cin, cout) and a per-output bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 4 or min(self.weights.shape) < 1:
            raise ShapeError(f"kernel weights must be 4-D and non-empty, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[3],):
            raise ShapeError(
                f"bias has {self.bias.shape[0]} entries for {self.weights.shape[3]} output channels"
            )

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.weights.shape

    @classmethod
    def zeros(cls, kh: int, kw: int, cin: int, cout: int) -> "KernelSet":
        return cls(np.zeros((kh, kw, cin, cout)), np.zeros(cout))

    def copy(self) -> "KernelSet":
        return KernelSet(self.weights.copy(), self.bias.copy())


def as_tensor(x) -> np.ndarray:
    """Convert to a finite float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError("tensor contains NaN or Inf")
    return arr


def _feature_map(x) -> np.ndarray:
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"expected an h x w x c feature map, got shape {x.shape}")
    return x


def conv2d(x, kernels: KernelSet) -> np.ndarray:
    """Stride-1 convolution with zero 'same' padding.

    Kernel extents must be odd so the output keeps the input's height and
    width.  Computed as one matrix product per kernel tap.
    """
    x = _feature_map(x)
    kh, kw, cin, cout = kernels.shape
    if x.shape[2] != cin:
        raise ShapeError(f"input has {x.shape[2]} channels, kernels expect {cin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("same-padded convolution needs odd kernel extents")
    h, w, _ = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    out = np.empty((h, w, cout))
    out[...] = kernels.bias
    for i in range(kh):
        for j in range(kw):
            out += xp[i:i + h, j:j + w, :] @ kernels.weights[i, j]
    return out


def conv2d_backward(x, kernels: KernelSet, grad_out) -> tuple[np.ndarray, KernelSet]:
    """Gradients of :func:`conv2d` w.r.t. its input and its kernels."""
    x = _feature_map(x)
    grad_out = as_tensor(grad_out)
    kh, kw, cin, cout = kernels.shape
    h, w, c = x.shape
    if c != cin:
        raise ShapeError(f"input has {c} channels, kernels expect {cin}")
    if grad_out.shape != (h, w, cout):
        raise ShapeError(f"grad_out shape {grad_out.shape} != conv output {(h, w, cout)}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    gxp = np.zeros_like(xp)
    gw = np.empty_like(kernels.weights)
    g2 = grad_out.reshape(-1, cout)
    for i in range(kh):
        for j in range(kw):
            window = xp[i:i + h, j:j + w, :]
            gw[i, j] = window.reshape(-1, cin).T @ g2
            gxp[i:i + h, j:j + w, :] += grad_out @ kernels.weights[i, j].T
    gx = gxp[ph:ph + h, pw:pw + w, :]
    return gx, KernelSet(gw, grad_out.sum(axis=(0, 1)))


def _check_deconv(x, kernels: KernelSet) -> None:
    kh, kw, cin, _ = kernels.shape
    if (kh, kw) != (2, 2):
        raise ShapeError(f"deconvolution kernels must be 2x2, got {kh}x{kw}")
    if x.shape[2] != cin:
        raise ShapeError(f"input has {x.shape[2]} channels, kernels expect {cin}")


def deconv2d(x, kernels: KernelSet) -> np.ndarray:
    """2x2, stride-2, unpadded transposed convolution (exact 2x upsampling).

    Input site (i, j) scatters ``x[i, j] @ W[a, b]`` to output (2i+a, 2j+b);
    with stride equal to the kernel size the placements never overlap.
    """
    x = _feature_map(x)
    _check_deconv(x, kernels)
    h, w, cin = x.shape
    cout = kernels.shape[3]
    wmat = kernels.weights.transpose(2, 0, 1, 3).reshape(cin, 4 * cout)
    y = (x.reshape(-1, cin) @ wmat).reshape(h, w, 2, 2, cout)
    y = y.transpose(0, 2, 1, 3, 4).reshape(2 * h, 2 * w, cout)
    return y + kernels.bias


def deconv2d_backward(x, kernels: KernelSet, grad_out) -> tuple[np.ndarray, KernelSet]:
    """Gradients of :func:`deconv2d`; the input gradient is a strided correlation."""
    x = _feature_map(x)
    grad_out = as_tensor(grad_out)
    _check_deconv(x, kernels)
    h, w, cin = x.shape
    cout = kernels.shape[3]
    if grad_out.shape != (2 * h, 2 * w, cout):
        raise ShapeError(f"grad_out shape {grad_out.shape} != deconv output {(2 * h, 2 * w, cout)}")
    g = grad_out.reshape(h, 2, w, 2, cout).transpose(0, 2, 1, 3, 4).reshape(h * w, 4 * cout)
    wmat = kernels.weights.transpose(2, 0, 1, 3).reshape(cin, 4 * cout)
    gx = (g @ wmat.T).reshape(h, w, cin)
    gw = (x.reshape(-1, cin).T @ g).reshape(cin, 2, 2, cout).transpose(1, 2, 0, 3)
    return gx, KernelSet(np.ascontiguousarray(gw), grad_out.sum(axis=(0, 1)))


def maxpool2d(x) -> tuple[np.ndarray, np.ndarray]:
    """2x2 stride-2 max pooling.

    Returns the pooled map and, per output cell, the winning position inside
    its window as a row-major index 0..3 (``divmod(idx, 2)`` gives the
    (row, col) offset).  Ties go to the first maximal index.
    """
    x = _feature_map(x)
    h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max pooling needs even extents, got {h}x{w}")
    windows = x.reshape(h // 2, 2, w // 2, 2, c).transpose(0, 2, 4, 1, 3).reshape(h // 2, w // 2, c, 4)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2d_backward(grad_out, argmax: np.ndarray) -> np.ndarray:
    """Route each pooled gradient back to the window position that won."""
    grad_out = as_tensor(grad_out)
    if grad_out.shape != argmax.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != pooled shape {argmax.shape}")
    hh, ww, c = grad_out.shape
    windows = np.zeros((hh, ww, c, 4))
    np.put_along_axis(windows, argmax[..., None], grad_out[..., None], axis=-1)
    return windows.reshape(hh, ww, c, 2, 2).transpose(0, 3, 1, 4, 2).reshape(2 * hh, 2 * ww, c)


def relu(x) -> np.ndarray:
    return np.maximum(as_tensor(x), 0.0)


def relu_backward(x, grad_out) -> np.ndarray:
    """Gate by ``x > 0``; the derivative at exactly zero is taken as 0."""
    x = as_tensor(x)
    grad_out = as_tensor(grad_out)
    if x.shape != grad_out.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {grad_out.shape}")
    return np.where(x > 0, grad_out, 0.0)


def add(a, b) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")
    return a + b


def _axis_weights(src: int, tgt: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if tgt == 1 or src == 1:
        pos = np.zeros(tgt)
    else:
        pos = np.arange(tgt) * ((src - 1) / (tgt - 1))
    lo = np.minimum(np.floor(pos).astype(int), src - 1)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def bilinear_resize(m, target_h: int, target_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of an h x w map (or h x w x c stack).

    Target pixel t samples source coordinate ``t * (src - 1) / (tgt - 1)``;
    an axis of extent 1 on either side samples coordinate 0.
    """
    m = as_tensor(m)
    if m.ndim not in (2, 3) or min(m.shape[:2]) < 1:
        raise ShapeError(f"expected a non-empty 2-D map, got shape {m.shape}")
    if target_h < 1 or target_w < 1:
        raise ShapeError(f"target extents must be positive, got {target_h}x{target_w}")
    h, w = m.shape[:2]
    if (h, w) == (target_h, target_w):
        return m.copy()
    r0, r1, fr = _axis_weights(h, target_h)
    c0, c1, fc = _axis_weights(w, target_w)
    if m.ndim == 3:
        fr = fr[:, None]
        fc = fc[:, None]
    rows = m[r0] * (1 - fr[:, None]) + m[r1] * fr[:, None]
    out = rows[:, c0] * (1 - fc[None]) + rows[:, c1] * fc[None]
    # rounding can nudge interpolants a hair outside the source range
    return np.clip(out, m.min(axis=(0, 1)), m.max(axis=(0, 1)))
