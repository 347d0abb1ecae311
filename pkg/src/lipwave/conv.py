"""Strided 1-D/2-D convolution, transposed convolution, and max-pooling.

Forward and backward passes are expressed as im2col-style GEMMs so the
heavy lifting happens inside BLAS. Transposed convolution scatters GEMM
output back in ceil(K/stride) vectorized block-adds per axis instead of a
per-tap loop; it is the exact adjoint of the convolution with the same
weight array (conv weights are (C_out, C_in, K), transposed-conv weights
(C_in, C_out, K), so one array serves both readings).

Convolutions carry no bias term; layers that need one add it separately.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Tensor

# cap on im2col / scatter scratch buffers, in array elements
_SCRATCH_ELEMS = 48_000_000


def _chunk(n, per_item):
    step = max(1, int(_SCRATCH_ELEMS // max(per_item, 1)))
    for lo in range(0, n, step):
        yield lo, min(lo + step, n)


# -- raw 1-D kernels -----------------------------------------------------------


def _conv1d_fwd(x, w, stride, pad):
    n, c, length = x.shape
    c_out, _, k = w.shape
    l_out = (length + 2 * pad - k) // stride + 1
    w2 = w.reshape(c_out, c * k)
    out = np.empty((n, c_out, l_out), dtype=x.dtype)
    for lo, hi in _chunk(n, l_out * c * k):
        xp = np.pad(x[lo:hi], ((0, 0), (0, 0), (pad, pad)))
        win = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
        cols = win.transpose(0, 2, 1, 3).reshape((hi - lo) * l_out, c * k)
        out[lo:hi] = (cols @ w2.T).reshape(hi - lo, l_out, c_out).transpose(0, 2, 1)
    return out


def _conv1d_dw(x, g, stride, pad, k):
    n, c, _ = x.shape
    c_out, l_out = g.shape[1], g.shape[2]
    dw = np.zeros((c_out, c * k), dtype=x.dtype)
    for lo, hi in _chunk(n, l_out * c * k):
        xp = np.pad(x[lo:hi], ((0, 0), (0, 0), (pad, pad)))
        win = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
        cols = win.transpose(0, 2, 1, 3).reshape((hi - lo) * l_out, c * k)
        g2 = g[lo:hi].transpose(0, 2, 1).reshape((hi - lo) * l_out, c_out)
        dw += g2.T @ cols
    return dw.reshape(c_out, c, k)


def _convt1d_fwd(y, w, stride, pad, out_len):
    """Scatter adjoint: out[n,co,t*stride-pad+k] += y[n,ci,t] * w[ci,co,k]."""
    n, c_in, length = y.shape
    _, c_out, k = w.shape
    q = -(-k // stride)
    kp = q * stride
    buf_len = max((length - 1) * stride + kp, out_len + 2 * pad, kp)
    w2 = w.reshape(c_in, c_out * k)
    out = np.empty((n, c_out, out_len), dtype=y.dtype)
    for lo, hi in _chunk(n, length * c_out * kp):
        m = hi - lo
        contrib = (y[lo:hi].transpose(0, 2, 1).reshape(m * length, c_in) @ w2)
        contrib = contrib.reshape(m, length, c_out, k).transpose(0, 2, 1, 3)
        if kp != k:
            contrib = np.pad(contrib, ((0, 0), (0, 0), (0, 0), (0, kp - k)))
        buf = np.zeros((m, c_out, buf_len), dtype=y.dtype)
        for qi in range(q):
            block = contrib[:, :, :, qi * stride:(qi + 1) * stride]
            buf[:, :, qi * stride:qi * stride + length * stride] += block.reshape(m, c_out, length * stride)
        out[lo:hi] = buf[:, :, pad:pad + out_len]
    return out


def _convt1d_dw(y, g, stride, pad, k):
    n, c_in, length = y.shape
    c_out = g.shape[1]
    dw = np.zeros((c_in, c_out * k), dtype=y.dtype)
    for lo, hi in _chunk(n, length * c_out * k):
        m = hi - lo
        gp = np.pad(g[lo:hi], ((0, 0), (0, 0), (pad, pad)))
        win = sliding_window_view(gp, k, axis=2)[:, :, ::stride, :][:, :, :length, :]
        cols = win.transpose(0, 2, 1, 3).reshape(m * length, c_out * k)
        y2 = y[lo:hi].transpose(0, 2, 1).reshape(m * length, c_in)
        dw += y2.T @ cols
    return dw.reshape(c_in, c_out, k)


# -- raw 2-D kernels -------------------------------------------------------------


def _conv2d_fwd(x, w, stride, pad):
    n, c, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    h_out = (h + 2 * pad - kh) // stride + 1
    w_out = (wd + 2 * pad - kw) // stride + 1
    w2 = w.reshape(c_out, c * kh * kw)
    out = np.empty((n, c_out, h_out, w_out), dtype=x.dtype)
    for lo, hi in _chunk(n, h_out * w_out * c * kh * kw):
        m = hi - lo
        xp = np.pad(x[lo:hi], ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(m * h_out * w_out, c * kh * kw)
        out[lo:hi] = (cols @ w2.T).reshape(m, h_out, w_out, c_out).transpose(0, 3, 1, 2)
    return out


def _conv2d_dw(x, g, stride, pad, kh, kw):
    n, c = x.shape[:2]
    c_out, h_out, w_out = g.shape[1:]
    dw = np.zeros((c_out, c * kh * kw), dtype=x.dtype)
    for lo, hi in _chunk(n, h_out * w_out * c * kh * kw):
        m = hi - lo
        xp = np.pad(x[lo:hi], ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(m * h_out * w_out, c * kh * kw)
        g2 = g[lo:hi].transpose(0, 2, 3, 1).reshape(m * h_out * w_out, c_out)
        dw += g2.T @ cols
    return dw.reshape(c_out, c, kh, kw)


def _convt2d_fwd(y, w, stride, pad, out_h, out_w):
    n, c_in, h, wd = y.shape
    _, c_out, kh, kw = w.shape
    qh, qw = -(-kh // stride), -(-kw // stride)
    kph, kpw = qh * stride, qw * stride
    bh = max((h - 1) * stride + kph, out_h + 2 * pad, kph)
    bw = max((wd - 1) * stride + kpw, out_w + 2 * pad, kpw)
    w2 = w.reshape(c_in, c_out * kh * kw)
    out = np.empty((n, c_out, out_h, out_w), dtype=y.dtype)
    for lo, hi in _chunk(n, h * wd * c_out * kph * kpw):
        m = hi - lo
        contrib = (y[lo:hi].transpose(0, 2, 3, 1).reshape(m * h * wd, c_in) @ w2)
        contrib = contrib.reshape(m, h, wd, c_out, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        if kph != kh or kpw != kw:
            contrib = np.pad(contrib, ((0, 0), (0, 0), (0, 0), (0, 0), (0, kph - kh), (0, kpw - kw)))
        buf = np.zeros((m, c_out, bh, bw), dtype=y.dtype)
        for qi in range(qh):
            for qj in range(qw):
                block = contrib[:, :, :, :, qi * stride:(qi + 1) * stride, qj * stride:(qj + 1) * stride]
                block = block.transpose(0, 1, 2, 4, 3, 5).reshape(m, c_out, h * stride, wd * stride)
                buf[:, :, qi * stride:qi * stride + h * stride, qj * stride:qj * stride + wd * stride] += block
        out[lo:hi] = buf[:, :, pad:pad + out_h, pad:pad + out_w]
    return out


def _convt2d_dw(y, g, stride, pad, kh, kw):
    n, c_in, h, wd = y.shape
    c_out = g.shape[1]
    dw = np.zeros((c_in, c_out * kh * kw), dtype=y.dtype)
    for lo, hi in _chunk(n, h * wd * c_out * kh * kw):
        m = hi - lo
        gp = np.pad(g[lo:hi], ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        win = sliding_window_view(gp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :h, :wd]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(m * h * wd, c_out * kh * kw)
        y2 = y[lo:hi].transpose(0, 2, 3, 1).reshape(m * h * wd, c_in)
        dw += y2.T @ cols
    return dw.reshape(c_in, c_out, kh, kw)


# -- taped ops ----------------------------------------------------------------------


def _batched(x, rank):
    if x.ndim == rank:
        return x.data[None], True
    if x.ndim == rank + 1:
        return x.data, False
    raise ShapeError(f"expected {rank}-D or {rank + 1}-D input, got shape {x.shape}")


def conv1d(x, w, stride=1, pad=0):
    """Cross-correlation of (C_in, L) or (N, C_in, L) with weights (C_out, C_in, K)."""
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv1d: need stride >= 1 and pad >= 0, got ({stride}, {pad})")
    xd, squeeze = _batched(x, 2)
    k = w.shape[2]
    if xd.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: input channels {xd.shape[1]} != weight channels {w.shape[1]}")
    if xd.shape[2] + 2 * pad < k:
        raise ShapeError(f"conv1d: kernel larger than padded input ({k} > {xd.shape[2] + 2 * pad})")
    length = xd.shape[2]
    out_data = _conv1d_fwd(xd, w.data, stride, pad)

    def bwd(g):
        gd = g[None] if squeeze else g
        if x.requires_grad:
            dx = _convt1d_fwd(gd, w.data, stride, pad, out_len=length)
            x._accum(dx[0] if squeeze else dx)
        if w.requires_grad:
            w._accum(_conv1d_dw(xd, gd, stride, pad, k))

    return Tensor._make(out_data[0] if squeeze else out_data, (x, w), bwd)


def conv_transpose1d(x, w, stride=1, pad=0):
    """Adjoint of conv1d; weights (C_in, C_out, K), output length (L-1)*stride - 2*pad + K."""
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv_transpose1d: need stride >= 1 and pad >= 0, got ({stride}, {pad})")
    xd, squeeze = _batched(x, 2)
    k = w.shape[2]
    if xd.shape[1] != w.shape[0]:
        raise ShapeError(f"conv_transpose1d: input channels {xd.shape[1]} != weight channels {w.shape[0]}")
    l_out = (xd.shape[2] - 1) * stride - 2 * pad + k
    if l_out < 1:
        raise ShapeError(f"conv_transpose1d: nonpositive output length {l_out}")
    out_data = _convt1d_fwd(xd, w.data, stride, pad, out_len=l_out)

    def bwd(g):
        gd = g[None] if squeeze else g
        if x.requires_grad:
            dx = _conv1d_fwd(gd, w.data, stride, pad)
            x._accum(dx[0] if squeeze else dx)
        if w.requires_grad:
            w._accum(_convt1d_dw(xd, gd, stride, pad, k))

    return Tensor._make(out_data[0] if squeeze else out_data, (x, w), bwd)


def conv2d(x, w, stride=1, pad=0):
    """Cross-correlation of (C_in, H, W) or (N, C_in, H, W) with weights (C_out, C_in, KH, KW)."""
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d: need stride >= 1 and pad >= 0, got ({stride}, {pad})")
    xd, squeeze = _batched(x, 3)
    kh, kw = w.shape[2], w.shape[3]
    if xd.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input channels {xd.shape[1]} != weight channels {w.shape[1]}")
    if xd.shape[2] + 2 * pad < kh or xd.shape[3] + 2 * pad < kw:
        raise ShapeError("conv2d: kernel larger than padded input")
    h, wd = xd.shape[2], xd.shape[3]
    out_data = _conv2d_fwd(xd, w.data, stride, pad)

    def bwd(g):
        gd = g[None] if squeeze else g
        if x.requires_grad:
            dx = _convt2d_fwd(gd, w.data, stride, pad, out_h=h, out_w=wd)
            x._accum(dx[0] if squeeze else dx)
        if w.requires_grad:
            w._accum(_conv2d_dw(xd, gd, stride, pad, kh, kw))

    return Tensor._make(out_data[0] if squeeze else out_data, (x, w), bwd)


def conv_transpose2d(x, w, stride=1, pad=0):
    """Adjoint of conv2d; weights (C_in, C_out, KH, KW)."""
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv_transpose2d: need stride >= 1 and pad >= 0, got ({stride}, {pad})")
    xd, squeeze = _batched(x, 3)
    kh, kw = w.shape[2], w.shape[3]
    if xd.shape[1] != w.shape[0]:
        raise ShapeError(f"conv_transpose2d: input channels {xd.shape[1]} != weight channels {w.shape[0]}")
    out_h = (xd.shape[2] - 1) * stride - 2 * pad + kh
    out_w = (xd.shape[3] - 1) * stride - 2 * pad + kw
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv_transpose2d: nonpositive output size ({out_h}, {out_w})")
    out_data = _convt2d_fwd(xd, w.data, stride, pad, out_h, out_w)

    def bwd(g):
        gd = g[None] if squeeze else g
        if x.requires_grad:
            dx = _conv2d_fwd(gd, w.data, stride, pad)
            x._accum(dx[0] if squeeze else dx)
        if w.requires_grad:
            w._accum(_convt2d_dw(xd, gd, stride, pad, kh, kw))

    return Tensor._make(out_data[0] if squeeze else out_data, (x, w), bwd)


def maxpool1d(x, kernel):
    """Non-overlapping max pooling (stride == kernel); trailing remainder dropped."""
    xd, squeeze = _batched(x, 2)
    n, c, length = xd.shape
    if length < kernel:
        raise ShapeError(f"maxpool1d: input length {length} shorter than kernel {kernel}")
    l_out = length // kernel
    v = xd[:, :, :l_out * kernel].reshape(n, c, l_out, kernel)
    am = v.argmax(axis=3)
    out_data = np.take_along_axis(v, am[..., None], axis=3)[..., 0]

    def bwd(g):
        gd = g[None] if squeeze else g
        buf = np.zeros((n, c, l_out, kernel), dtype=xd.dtype)
        np.put_along_axis(buf, am[..., None], gd[..., None], axis=3)
        dx = np.zeros_like(xd)
        dx[:, :, :l_out * kernel] = buf.reshape(n, c, l_out * kernel)
        x._accum(dx[0] if squeeze else dx)

    return Tensor._make(out_data[0] if squeeze else out_data, (x,), bwd)
