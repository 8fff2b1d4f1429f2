"""Convolution, pooling and normalization primitives built on :mod:`tensor`."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DTYPE, Tensor, _accumulate, _make, amax, as_tensor, index, reshape, transpose


def conv2d(x, w, b=None) -> Tensor:
    """Stride-1 'same' 2-D convolution (cross-correlation), channels last.

    x: (B, H, W, Cin); w: (kh, kw, Cin, Cout) with odd kh, kw; b: (Cout,).
    """
    x, w = as_tensor(x), as_tensor(w)
    B, H, W, cin = x.shape
    kh, kw, wcin, cout = w.shape
    if wcin != cin:
        raise ValueError(f"conv2d: input has {cin} channels, kernel expects {wcin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d: kernel sizes must be odd")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    # (B, H, W, Cin, kh, kw) -> (B*H*W, kh*kw*Cin)
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B * H * W, kh * kw * cin)
    wm = w.data.reshape(kh * kw * cin, cout)
    out = cols @ wm
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents.append(b)

    def _bw(g):
        g2 = g.reshape(B * H * W, cout)
        if w.requires_grad:
            _accumulate(w, (cols.T @ g2).reshape(w.shape))
        if b is not None and b.requires_grad:
            _accumulate(b, g2.sum(axis=0))
        if x.requires_grad:
            gcols = (g2 @ wm.T).reshape(B, H, W, kh, kw, cin)
            gxp = np.zeros(xp.shape, dtype=DTYPE)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i : i + H, j : j + W, :] += gcols[:, :, :, i, j, :]
            _accumulate(x, gxp[:, ph : ph + H, pw : pw + W, :])

    return _make(out.reshape(B, H, W, cout), parents, _bw)


def conv1d(x, w, b=None) -> Tensor:
    """Stride-1 'same' 1-D convolution over time, channels last.

    x: (B, T, Cin); w: (k, Cin, Cout) with odd k; b: (Cout,).
    """
    x, w = as_tensor(x), as_tensor(w)
    B, T, cin = x.shape
    k, wcin, cout = w.shape
    if wcin != cin:
        raise ValueError(f"conv1d: input has {cin} channels, kernel expects {wcin}")
    if k % 2 == 0:
        raise ValueError("conv1d: kernel size must be odd")
    p = k // 2
    xp = np.pad(x.data, ((0, 0), (p, p), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # (B, T, Cin, k)
    cols = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(B * T, k * cin)
    wm = w.data.reshape(k * cin, cout)
    out = cols @ wm
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents.append(b)

    def _bw(g):
        g2 = g.reshape(B * T, cout)
        if w.requires_grad:
            _accumulate(w, (cols.T @ g2).reshape(w.shape))
        if b is not None and b.requires_grad:
            _accumulate(b, g2.sum(axis=0))
        if x.requires_grad:
            gcols = (g2 @ wm.T).reshape(B, T, k, cin)
            gxp = np.zeros(xp.shape, dtype=DTYPE)
            for i in range(k):
                gxp[:, i : i + T, :] += gcols[:, :, i, :]
            _accumulate(x, gxp[:, p : p + T, :])

    return _make(out.reshape(B, T, cout), parents, _bw)


def maxpool2d(x) -> Tensor:
    """2x2 stride-2 max-pool on (B, H, W, C); H and W must be even."""
    x = as_tensor(x)
    B, H, W, C = x.shape
    if H % 2 or W % 2:
        raise ValueError(f"maxpool2d needs even spatial dims, got {H}x{W}")
    t = reshape(x, (B, H // 2, 2, W // 2, 2, C))
    t = transpose(t, (0, 1, 3, 5, 2, 4))
    return amax(t, axis=(4, 5))


def maxpool1d(x) -> Tensor:
    """Width-2 stride-2 max-pool over time on (B, T, C); a trailing odd frame is dropped."""
    x = as_tensor(x)
    B, T, C = x.shape
    if T < 2:
        raise ValueError("maxpool1d needs at least two frames")
    if T % 2:
        x = index(x, (slice(None), slice(0, T - 1), slice(None)))
        T -= 1
    t = reshape(x, (B, T // 2, 2, C))
    return amax(t, axis=2)


def l2_normalize(x, axis: int = -1) -> Tensor:
    """Scale vectors along ``axis`` to unit L2 norm; zero vectors stay zero."""
    x = as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    y = np.where(norm > 0, x.data / safe, 0.0)

    def _bw(g):
        proj = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(x, np.where(norm > 0, (g - y * proj) / safe, 0.0))

    return _make(y, (x,), _bw)
