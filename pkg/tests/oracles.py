"""Independent slow-path oracles for the numeric tests.

Everything here is written as plain loops or direct textbook formulas, on
purpose: these must not share any code path with the library being tested.
"""

import numpy as np


def matmul_oracle(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def conv1d_oracle(x, w, stride=1, pad=0):
    """x: (N, C_in, T), w: (C_out, C_in, K)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, ci, t = x.shape
    co, ci2, k = w.shape
    assert ci == ci2
    xp = np.zeros((n, ci, t + 2 * pad))
    xp[:, :, pad:pad + t] = x
    t_out = (t + 2 * pad - k) // stride + 1
    out = np.zeros((n, co, t_out))
    for b in range(n):
        for o in range(co):
            for j in range(t_out):
                s = 0.0
                for c in range(ci):
                    for q in range(k):
                        s += xp[b, c, j * stride + q] * w[o, c, q]
                out[b, o, j] = s
    return out


def conv_transpose1d_oracle(y, w, stride=1, pad=0):
    """y: (N, C_in, T), w: (C_in, C_out, K); scatter form of the adjoint."""
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, ci, t = y.shape
    ci2, co, k = w.shape
    assert ci == ci2
    full = (t - 1) * stride + k
    out = np.zeros((n, co, full))
    for b in range(n):
        for c in range(ci):
            for j in range(t):
                for o in range(co):
                    for q in range(k):
                        out[b, o, j * stride + q] += y[b, c, j] * w[c, o, q]
    if pad:
        out = out[:, :, pad:full - pad]
    return out


def conv2d_oracle(x, w, stride=1, pad=0):
    """x: (N, C_in, H, W), w: (C_out, C_in, KH, KW)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, ci, h, wd = x.shape
    co, ci2, kh, kw = w.shape
    assert ci == ci2
    xp = np.zeros((n, ci, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, co, ho, wo))
    for b in range(n):
        for o in range(co):
            for i in range(ho):
                for j in range(wo):
                    s = 0.0
                    for c in range(ci):
                        for p in range(kh):
                            for q in range(kw):
                                s += xp[b, c, i * stride + p, j * stride + q] * w[o, c, p, q]
                    out[b, o, i, j] = s
    return out


def conv_transpose2d_oracle(y, w, stride=1, pad=0):
    """y: (N, C_in, H, W), w: (C_in, C_out, KH, KW)."""
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, ci, h, wd = y.shape
    ci2, co, kh, kw = w.shape
    assert ci == ci2
    fh = (h - 1) * stride + kh
    fw = (wd - 1) * stride + kw
    out = np.zeros((n, co, fh, fw))
    for b in range(n):
        for c in range(ci):
            for i in range(h):
                for j in range(wd):
                    for o in range(co):
                        for p in range(kh):
                            for q in range(kw):
                                out[b, o, i * stride + p, j * stride + q] += y[b, c, i, j] * w[c, o, p, q]
    if pad:
        out = out[:, :, pad:fh - pad, pad:fw - pad]
    return out


def maxpool1d_oracle(x, kernel):
    """Non-overlapping windows; a trailing remainder shorter than the window
    is dropped."""
    x = np.asarray(x, dtype=np.float64)
    n, c, t = x.shape
    t_out = t // kernel
    out = np.zeros((n, c, t_out))
    for b in range(n):
        for ch in range(c):
            for j in range(t_out):
                out[b, ch, j] = max(x[b, ch, j * kernel:(j + 1) * kernel])
    return out


def dft_power_oracle(frames, n_fft):
    """Naive O(n^2) DFT power spectrum of already-windowed frames.

    frames: (T, win). Zero-pads each frame to n_fft and returns the one-sided
    |X[k]|^2 for k = 0..n_fft//2.
    """
    frames = np.asarray(frames, dtype=np.float64)
    t, win = frames.shape
    bins = n_fft // 2 + 1
    out = np.zeros((t, bins))
    ns = np.arange(n_fft)
    for fi in range(t):
        padded = np.zeros(n_fft)
        padded[:win] = frames[fi]
        for k in range(bins):
            re = float(np.sum(padded * np.cos(-2.0 * np.pi * k * ns / n_fft)))
            im = float(np.sum(padded * np.sin(-2.0 * np.pi * k * ns / n_fft)))
            out[fi, k] = re * re + im * im
    return out


def dct2_ortho_oracle(mat, n_coeffs):
    """Direct-formula orthonormal DCT-II along axis 1, first n_coeffs kept."""
    mat = np.asarray(mat, dtype=np.float64)
    t, n = mat.shape
    out = np.zeros((t, n_coeffs))
    for fi in range(t):
        for k in range(n_coeffs):
            s = 0.0
            for j in range(n):
                s += mat[fi, j] * np.cos(np.pi * k * (2 * j + 1) / (2.0 * n))
            s *= np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
            out[fi, k] = s
    return out


def deltas_oracle(feats):
    """Two-tap regression deltas with edge replication, written index by index."""
    feats = np.asarray(feats, dtype=np.float64)
    t = feats.shape[0]
    out = np.zeros_like(feats)
    for i in range(t):
        num = np.zeros(feats.shape[1])
        for n in (1, 2):
            hi = feats[min(i + n, t - 1)]
            lo = feats[max(i - n, 0)]
            num += n * (hi - lo)
        out[i] = num / 10.0
    return out


def adam_oracle(param, grads, lr, betas=(0.9, 0.999), eps=1e-8):
    """Reference Adam trajectory: returns the parameter after applying the
    given gradient sequence."""
    p = np.asarray(param, dtype=np.float64).copy()
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    b1, b2 = betas
    for t, g in enumerate(grads, start=1):
        g = np.asarray(g, dtype=np.float64)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p = p - lr * mhat / (np.sqrt(vhat) + eps)
    return p
