"""Forward and backward kernels for the layers used by the clip classifier.

All tensors follow the (batch, channels, time, height, width) layout. Each
``*_forward`` returns ``(output, cache)`` and the matching ``*_backward``
consumes the cache. Nothing here allocates parameters; see ``layers``.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def triple(v) -> tuple[int, int, int]:
    if np.isscalar(v):
        return (int(v),) * 3
    v = tuple(int(i) for i in v)
    if len(v) != 3:
        raise ShapeError(f"expected 3 values, got {v}")
    return v


def _out_len(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


# ---------------------------------------------------------------- conv3d


def _offsets(ks):
    for a in range(ks[0]):
        for b in range(ks[1]):
            for c in range(ks[2]):
                yield a, b, c


def _shifted(xp, off, stride, out_dims):
    a, b, c = off
    return xp[:, :,
              a : a + stride[0] * (out_dims[0] - 1) + 1 : stride[0],
              b : b + stride[1] * (out_dims[1] - 1) + 1 : stride[1],
              c : c + stride[2] * (out_dims[2] - 1) + 1 : stride[2]]


def _im2col(xp, ks, stride, out_dims):
    # (N, kernel_offsets * C, positions): one contiguous copy per kernel offset
    n, c = xp.shape[:2]
    k = ks[0] * ks[1] * ks[2]
    cols = np.empty((n, k, c) + out_dims, dtype=xp.dtype)
    for o, off in enumerate(_offsets(ks)):
        cols[:, o] = _shifted(xp, off, stride, out_dims)
    return cols.reshape(n, k * c, -1)


def conv3d_forward(x, w, b=None, stride=1, padding=0):
    """Cross-correlation of ``x`` (N, C, T, H, W) with ``w`` (F, C, kt, kh, kw)."""
    if x.ndim != 5 or w.ndim != 5:
        raise ShapeError(f"conv3d expects 5-d input and weight, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv3d channel mismatch: input {x.shape} vs weight {w.shape}")
    stride, padding = triple(stride), triple(padding)
    ks = w.shape[2:]
    out_dims = tuple(_out_len(n, k, s, p) for n, k, s, p in zip(x.shape[2:], ks, stride, padding))
    if min(out_dims) < 1:
        raise ShapeError(f"conv3d output would be empty: input {x.shape}, weight {w.shape}")
    n = x.shape[0]
    f = w.shape[0]
    if ks == (1, 1, 1) and stride == (1, 1, 1) and padding == (0, 0, 0):
        cols = x.reshape(n, x.shape[1], -1)
    else:
        xp = np.pad(x, ((0, 0), (0, 0)) + tuple((p, p) for p in padding)) if any(padding) else x
        cols = _im2col(xp, ks, stride, out_dims)
    # kernel flattened in (offset, channel) order to match the column layout
    wmat = np.ascontiguousarray(w.reshape(f, w.shape[1], -1).transpose(0, 2, 1).reshape(f, -1))
    out = np.matmul(wmat, cols).reshape((n, f) + out_dims)
    if b is not None:
        out += b.reshape(1, -1, 1, 1, 1)
    return out, (x.shape, w.shape, wmat, cols, stride, padding, b is not None)


def conv3d_backward(dout, cache, input_grad=True):
    """Return ``(dx, dw, db)``; ``db`` is None without bias, ``dx`` None if not requested."""
    x_shape, w_shape, wmat, cols, stride, padding, has_bias = cache
    n, f = dout.shape[:2]
    c = x_shape[1]
    ks = w_shape[2:]
    db = dout.sum(axis=(0, 2, 3, 4)) if has_bias else None
    d2 = dout.reshape(n, f, -1)
    dwmat = np.zeros_like(wmat)
    for i in range(n):
        dwmat += d2[i] @ cols[i].T
    dw = dwmat.reshape(f, -1, c).transpose(0, 2, 1).reshape(w_shape)
    if not input_grad:
        return None, dw, db
    dcols = np.matmul(wmat.T, d2)
    if ks == (1, 1, 1) and stride == (1, 1, 1) and padding == (0, 0, 0):
        return dcols.reshape(x_shape), dw, db
    out_dims = dout.shape[2:]
    dcols = dcols.reshape((n, -1, c) + out_dims)
    padded = tuple(m + 2 * p for m, p in zip(x_shape[2:], padding))
    dxp = np.zeros(x_shape[:2] + padded, dtype=dout.dtype)
    for o, off in enumerate(_offsets(ks)):
        _shifted(dxp, off, stride, out_dims)[...] += dcols[:, o]
    pt, ph, pw = padding
    dx = dxp[:, :, pt : pt + x_shape[2], ph : ph + x_shape[3], pw : pw + x_shape[4]]
    return np.ascontiguousarray(dx), dw, db


# ---------------------------------------------------------------- batch norm


def batchnorm_forward(x, gamma, beta, running_mean, running_var, *, train, momentum=0.1, eps=1e-5):
    """Per-channel normalisation over (batch, time, height, width).

    In train mode the running statistics are updated in place (unbiased
    variance), mirroring the usual deep-learning convention.
    """
    c = x.shape[1]
    if not (len(gamma) == len(beta) == len(running_mean) == len(running_var) == c):
        raise ShapeError(f"batchnorm parameters do not match {c} channels")
    axes = (0, 2, 3, 4)
    shape = (1, c, 1, 1, 1)
    if train:
        mean = x.mean(axis=axes)
        xc = x - mean.reshape(shape)
        var = np.mean(xc * xc, axis=axes)
        m = x.size // c
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        xc = x - running_mean.reshape(shape)
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std.reshape(shape)
    out = xhat * gamma.reshape(shape) + beta.reshape(shape)
    return out, (xhat, inv_std, gamma, train)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, train = cache
    c = dout.shape[1]
    shape = (1, c, 1, 1, 1)
    axes = (0, 2, 3, 4)
    dbeta = dout.sum(axis=axes)
    dgamma = np.sum(dout * xhat, axis=axes)
    if not train:
        return dout * (gamma * inv_std).reshape(shape), dgamma, dbeta
    m = dout.size // c
    dx = (gamma * inv_std / m).reshape(shape) * (
        m * dout - dbeta.reshape(shape) - xhat * dgamma.reshape(shape)
    )
    return dx, dgamma, dbeta


# ---------------------------------------------------------------- relu


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


# ---------------------------------------------------------------- max pooling


def maxpool3d_forward(x, window, stride=None, padding=0):
    """Windowed maximum; ties go to the first element in (t, h, w) scan order."""
    window = triple(window)
    stride = window if stride is None else triple(stride)
    padding = triple(padding)
    for n, k, p in zip(x.shape[2:], window, padding):
        if k > n + 2 * p:
            raise ShapeError(f"pool window {window} larger than input {x.shape}")
    if any(padding):
        xp = np.pad(x, ((0, 0), (0, 0)) + tuple((p, p) for p in padding), constant_values=-np.inf)
    else:
        xp = x
    out_dims = tuple(_out_len(n, k, s, p) for n, k, s, p in zip(x.shape[2:], window, stride, padding))
    out = None
    for off in _offsets(window):
        v = _shifted(xp, off, stride, out_dims)
        out = v.copy() if out is None else np.maximum(out, v, out=out)
    return out, (xp, x.shape, window, stride, padding, out)


def maxpool3d_backward(dout, cache):
    xp, x_shape, window, stride, padding, out = cache
    dxp = np.zeros(xp.shape, dtype=dout.dtype)
    free = np.ones(out.shape, dtype=bool)
    for off in _offsets(window):
        hit = _shifted(xp, off, stride, out.shape[2:]) == out
        hit &= free
        free &= ~hit
        _shifted(dxp, off, stride, out.shape[2:])[...] += dout * hit
    pt, ph, pw = padding
    return dxp[:, :, pt : pt + x_shape[2], ph : ph + x_shape[3], pw : pw + x_shape[4]]


def _adaptive_bins(n: int, out: int) -> list[tuple[int, int]]:
    return [((i * n) // out, -((-(i + 1) * n) // out)) for i in range(out)]


def adaptive_maxpool_hw_forward(x, out_hw):
    """Max-pool height and width onto a fixed ``out_hw`` grid (time untouched)."""
    oh, ow = out_hw
    h, w = x.shape[3:]
    if h < oh or w < ow:
        raise ShapeError(f"adaptive pool target {out_hw} larger than input {x.shape}")
    out = np.empty(x.shape[:3] + (oh, ow), dtype=x.dtype)
    args = {}
    for i, (h0, h1) in enumerate(_adaptive_bins(h, oh)):
        for j, (w0, w1) in enumerate(_adaptive_bins(w, ow)):
            region = x[:, :, :, h0:h1, w0:w1].reshape(x.shape[:3] + (-1,))
            a = region.argmax(axis=-1)
            out[:, :, :, i, j] = np.take_along_axis(region, a[..., None], axis=-1)[..., 0]
            args[i, j] = (h0, h1, w0, w1, a)
    return out, (x.shape, args)


def adaptive_maxpool_hw_backward(dout, cache):
    x_shape, args = cache
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for (i, j), (h0, h1, w0, w1, a) in args.items():
        rw = w1 - w0
        region = dx[:, :, :, h0:h1, w0:w1]
        flat = np.zeros(x_shape[:3] + ((h1 - h0) * rw,), dtype=dout.dtype)
        np.put_along_axis(flat, a[..., None], dout[:, :, :, i, j][..., None], axis=-1)
        region += flat.reshape(region.shape)
    return dx


# ---------------------------------------------------------------- LSTM


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_forward(x, wx, wh, b):
    """Run an LSTM over ``x`` (N, T, D) from a zero state; return the last hidden state.

    Gate order in the stacked weights is input, forget, candidate, output.
    ``wx`` is (D, 4U), ``wh`` is (U, 4U), ``b`` is (4U,).
    """
    if x.ndim != 3 or wx.shape[0] != x.shape[2]:
        raise ShapeError(f"lstm input {x.shape} incompatible with input weights {wx.shape}")
    u = wh.shape[0]
    if wx.shape[1] != 4 * u or wh.shape[1] != 4 * u or b.shape != (4 * u,):
        raise ShapeError(f"lstm weights inconsistent: wx {wx.shape}, wh {wh.shape}, b {b.shape}")
    n, steps, _ = x.shape
    h = np.zeros((n, u), dtype=x.dtype)
    c = np.zeros((n, u), dtype=x.dtype)
    xw = np.tensordot(x, wx, axes=([2], [0])) + b
    tape = []
    for t in range(steps):
        z = xw[:, t] + h @ wh
        i = sigmoid(z[:, :u])
        f = sigmoid(z[:, u : 2 * u])
        g = np.tanh(z[:, 2 * u : 3 * u])
        o = sigmoid(z[:, 3 * u :])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        tape.append((h_prev, c_prev, i, f, g, o, tc))
    return h, (x, wx, wh, tape)


def lstm_backward(dh_last, cache):
    """Backpropagation through time from a gradient on the final hidden state."""
    x, wx, wh, tape = cache
    u = wh.shape[0]
    n, steps, _ = x.shape
    dz_all = np.empty((n, steps, 4 * u), dtype=dh_last.dtype)
    dwh = np.zeros_like(wh)
    dh = dh_last
    dc = np.zeros_like(dh_last)
    for t in reversed(range(steps)):
        h_prev, c_prev, i, f, g, o, tc = tape[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = dz_all[:, t]
        dz[:, :u] = di * i * (1.0 - i)
        dz[:, u : 2 * u] = df * f * (1.0 - f)
        dz[:, 2 * u : 3 * u] = dg * (1.0 - g * g)
        dz[:, 3 * u :] = do * o * (1.0 - o)
        dwh += h_prev.T @ dz
        dh = dz @ wh.T
        dc = dc * f
    dwx = np.tensordot(x, dz_all, axes=([0, 1], [0, 1]))
    db = dz_all.sum(axis=(0, 1))
    dx = np.tensordot(dz_all, wx, axes=([2], [1]))
    return dx, dwx, dwh, db


# ---------------------------------------------------------------- dense / softmax / loss


def dense_forward(h, w, b):
    """Affine head; ``w`` is (classes, features)."""
    if h.shape[-1] != w.shape[1]:
        raise ShapeError(f"dense input {h.shape} incompatible with weight {w.shape}")
    return h @ w.T + b, (h, w)


def dense_backward(dlogits, cache):
    h, w = cache
    return dlogits @ w, dlogits.T @ h, dlogits.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, target, clamp=1e-12):
    """Mean negative log-likelihood of integer ``target`` (or a one-hot matrix)."""
    probs = np.atleast_2d(probs)
    target = np.asarray(target)
    if target.ndim == 2:
        target = target.argmax(axis=-1)
    target = np.atleast_1d(target)
    p = probs[np.arange(len(target)), target]
    return float(np.mean(-np.log(np.maximum(p, clamp))))


def softmax_cross_entropy_backward(probs, target):
    """Gradient of the mean cross-entropy w.r.t. the logits: (p - onehot) / N."""
    probs = np.atleast_2d(probs)
    target = np.atleast_1d(np.asarray(target))
    if target.ndim == 2:
        target = target.argmax(axis=-1)
    g = probs.copy()
    g[np.arange(len(target)), target] -= 1.0
    return g / len(target)
