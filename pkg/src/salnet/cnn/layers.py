"""Forward and backward kernels for the network layers.

All tensors are batched and laid out as (N, C, H, W).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def out_size(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


def _windows(x, kh, kw, stride):
    # (N, C, OH, OW, kh, kw) view, no copy
    return sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


# --- convolution -------------------------------------------------------------

def conv_forward(x, w, b, stride=1):
    """Valid cross-correlation: out[n, o] = sum_c x[n, c] * w[o, c] + b[o]."""
    n, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if c != cw:
        raise ValueError(f"input has {c} channels, kernels expect {cw}")
    if kh > h or kw > wd:
        raise ValueError(f"kernel {kh}x{kw} larger than input {h}x{wd}")
    cols = _windows(x, kh, kw, stride)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, OH, OW, O)
    out += b
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv_backward(dout, x, w, stride=1):
    """Gradients (dx, dw, db) of a valid convolution."""
    o, c, kh, kw = w.shape
    oh, ow = dout.shape[2:]
    cols = _windows(x, kh, kw, stride)
    db = dout.sum(axis=(0, 2, 3))
    dw = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3]))  # (O, C, kh, kw)
    dcols = np.tensordot(dout, w, axes=([1], [0]))  # (N, OH, OW, C, kh, kw)
    dcols = dcols.transpose(0, 3, 1, 2, 4, 5)
    dx = np.zeros_like(x)
    hspan, wspan = stride * (oh - 1) + 1, stride * (ow - 1) + 1
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + hspan:stride, j:j + wspan:stride] += dcols[..., i, j]
    return dx, dw, db


# --- max pooling ---------------------------------------------------------------

def maxpool_forward(x, window=2, stride=2):
    """Max over each ``window x window`` neighbourhood; also returns the argmax record."""
    n, c, h, w = x.shape
    if window > h or window > w:
        raise ValueError(f"pool window {window} larger than input {h}x{w}")
    win = _windows(x, window, window, stride)
    oh, ow = win.shape[2:4]
    flat = win.reshape(n, c, oh, ow, window * window)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool_backward(dout, arg, x_shape, window=2, stride=2):
    n, c, h, w = x_shape
    oh, ow = dout.shape[2:]
    rows = np.arange(oh)[:, None] * stride + arg // window
    cols = np.arange(ow)[None, :] * stride + arg % window
    base = (np.arange(n)[:, None, None, None] * c + np.arange(c)[None, :, None, None]) * (h * w)
    flat = (base + rows * w + cols).ravel()
    dx = np.bincount(flat, weights=dout.ravel(), minlength=n * c * h * w)
    return dx.reshape(x_shape)


# --- rectifier -----------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dout, x):
    return dout * (x > 0)


# --- local response normalization -------------------------------------------

def box_sum(x, size):
    """Sum over a centered ``size x size`` spatial window, clipped at the borders."""
    r = size // 2
    h, w = x.shape[-2:]
    padded = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(r, r), (r, r)])
    out = np.zeros_like(x)
    for dy in range(size):
        for dx in range(size):
            out += padded[..., dy:dy + h, dx:dx + w]
    return out


def _lrn_check(size, alpha, beta):
    if size < 1 or size % 2 == 0:
        raise ValueError(f"LRN size must be odd and positive, got {size}")
    if alpha < 0 or beta <= 0:
        raise ValueError("LRN needs alpha >= 0 and beta > 0")


def lrn_forward(x, size=5, alpha=1e-4, beta=0.75):
    """Within-channel spatial LRN: x / (1 + alpha/size^2 * sum of squares in the window)^beta."""
    _lrn_check(size, alpha, beta)
    denom = 1.0 + (alpha / size ** 2) * box_sum(x * x, size)
    return x * denom ** -beta, denom


def lrn_backward(dout, x, denom, size=5, alpha=1e-4, beta=0.75):
    inner = box_sum(dout * x * denom ** (-beta - 1), size)
    return dout * denom ** -beta - (2 * alpha * beta / size ** 2) * x * inner


# --- inner product and softmax ----------------------------------------------------

def inner_product_forward(x, w, b):
    return x.reshape(x.shape[0], -1) @ w.T + b


def inner_product_backward(dout, x, w):
    flat = x.reshape(x.shape[0], -1)
    return (dout @ w).reshape(x.shape), dout.T @ flat, dout.sum(axis=0)


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(probs, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    n = probs.shape[0]
    picked = probs[np.arange(n), labels]
    loss = -np.mean(np.log(np.maximum(picked, 1e-300)))
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n
