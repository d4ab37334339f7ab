"""Elementwise ops and the ring convolution.

The ring convolution is a stride-1 cross-correlation whose padding is
circular along the angular axis (axis 1 of a (C, h, w) tensor, matching the
physical closure of the polar image) and zero along the radial axis.
"""

from __future__ import annotations

from typing import Optional

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z))
    return e / e.sum()


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def global_avg(x: np.ndarray) -> np.ndarray:
    """Spatial mean per channel of a (C, h, w) tensor."""
    return x.mean(axis=(1, 2))


def _pad_ring(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph:
        x = np.pad(x, ((0, 0), (ph, ph), (0, 0)), mode="wrap")
    if pw:
        x = np.pad(x, ((0, 0), (0, 0), (pw, pw)))
    return x


def _check_shapes(x: np.ndarray, kernel: np.ndarray) -> tuple[int, int, int, int, int, int]:
    if x.ndim != 3 or kernel.ndim != 4:
        raise ValueError(f"expected x (C,h,w) and kernel (C_out,C_in,kh,kw), got {x.shape}, {kernel.shape}")
    c_in, h, w = x.shape
    c_out, c_in_k, kh, kw = kernel.shape
    if c_in_k != c_in:
        raise ValueError(f"kernel expects {c_in_k} input channels, tensor has {c_in}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel dims must be odd, got {kh}x{kw}")
    return c_in, h, w, c_out, kh, kw


def _patches(xp: np.ndarray, h: int, w: int, c_in: int, kh: int, kw: int) -> np.ndarray:
    """(C_in*kh*kw, h*w) im2col matrix of the padded input."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (h, w), axis=(1, 2))  # (C, kh, kw, h, w)
    return np.ascontiguousarray(win).reshape(c_in * kh * kw, h * w)


def ring_conv2d(x: np.ndarray, kernel: np.ndarray, bias: Optional[np.ndarray] = None) -> np.ndarray:
    """Cross-correlate (C_in, h, w) with (C_out, C_in, kh, kw) at stride 1.

    Circular padding along the angular axis, zero padding along the radial
    axis; output spatial size equals the input's.
    """
    c_in, h, w, c_out, kh, kw = _check_shapes(x, kernel)
    if kh == 1 and kw == 1:
        out = (kernel[:, :, 0, 0] @ x.reshape(c_in, h * w)).reshape(c_out, h, w)
    else:
        cols = _patches(_pad_ring(x, kh // 2, kw // 2), h, w, c_in, kh, kw)
        out = (kernel.reshape(c_out, -1) @ cols).reshape(c_out, h, w)
    if bias is not None:
        out = out + bias[:, None, None]
    return out


def ring_conv2d_backward(
    grad_out: np.ndarray,
    x: np.ndarray,
    kernel: np.ndarray,
    with_bias: bool = True,
) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Gradients of :func:`ring_conv2d` w.r.t. input, kernel and bias."""
    c_in, h, w, c_out, kh, kw = _check_shapes(x, kernel)
    ph, pw = kh // 2, kw // 2
    go = grad_out.reshape(c_out, h * w)
    if kh == 1 and kw == 1:
        dk = (go @ x.reshape(c_in, h * w).T).reshape(kernel.shape)
        dx = (kernel[:, :, 0, 0].T @ go).reshape(c_in, h, w)
    else:
        cols = _patches(_pad_ring(x, ph, pw), h, w, c_in, kh, kw)
        dk = (go @ cols.T).reshape(kernel.shape)
        dcols = (kernel.reshape(c_out, -1).T @ go).reshape(c_in, kh, kw, h, w)
        dxp = np.zeros((c_in, h + 2 * ph, w + 2 * pw), dtype=dcols.dtype)
        for di in range(kh):
            for dj in range(kw):
                dxp[:, di : di + h, dj : dj + w] += dcols[:, di, dj]
        dx = _fold_ring(dxp, h, w, ph, pw)
    db = grad_out.sum(axis=(1, 2)) if with_bias else None
    return dx, dk, db


def _fold_ring(dxp: np.ndarray, h: int, w: int, ph: int, pw: int) -> np.ndarray:
    """Fold padded-input gradients back: wrap the circular margins, drop the
    zero-padded radial margins."""
    d = dxp[:, :, pw : pw + w] if pw else dxp
    if ph == 0:
        return d.copy()
    dx = d[:, ph : ph + h, :].copy()
    if ph <= h:
        dx[:, h - ph :, :] += d[:, :ph, :]
        dx[:, :ph, :] += d[:, ph + h :, :]
    else:
        for i in range(d.shape[1]):
            if ph <= i < ph + h:
                continue
            dx[:, (i - ph) % h, :] += d[:, i, :]
    return dx
