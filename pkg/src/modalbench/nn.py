"""Minimal numpy layers with hand-written backward passes.

Only what the shape predictor needs: 3x3 stride-2 convolutions, ReLU,
global average pooling and dense layers. Forward functions return
(output, cache); backward functions consume the cache and return input and
weight gradients. float64 throughout.
"""

from __future__ import annotations

import numpy as np


def he_init(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(g, x):
    return np.where(x > 0.0, g, 0.0)


def _im2col(xp, h_out, w_out):
    """Gather 3x3 stride-2 patches from a padded (B, C, H+2, W+2) input."""
    b, c = xp.shape[:2]
    cols = np.empty((b, c, 3, 3, h_out, w_out))
    for ki in range(3):
        for kj in range(3):
            cols[:, :, ki, kj] = xp[:, :, ki : ki + 2 * h_out : 2, kj : kj + 2 * w_out : 2]
    return cols.reshape(b, c * 9, h_out * w_out)


def conv2d(x, w, bias):
    """3x3 convolution, stride 2, zero padding 1.

    x: (B, C_in, H, W); w: (C_out, C_in, 3, 3); bias: (C_out,).
    Returns (out (B, C_out, H/2, W/2), cache).
    """
    b, c, h, wdt = x.shape
    h_out, w_out = (h + 1) // 2, (wdt + 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = _im2col(xp, h_out, w_out)
    wm = w.reshape(w.shape[0], -1)
    out = np.einsum("oc,bcl->bol", wm, cols) + bias[None, :, None]
    out = out.reshape(b, w.shape[0], h_out, w_out)
    return out, (cols, x.shape, w.shape)


def conv2d_backward(g, w, cache):
    cols, x_shape, w_shape = cache
    b, _, h, wdt = x_shape
    c_out = w_shape[0]
    h_out, w_out = (h + 1) // 2, (wdt + 1) // 2
    gm = g.reshape(b, c_out, h_out * w_out)
    gw = np.einsum("bol,bcl->oc", gm, cols).reshape(w_shape)
    gb = gm.sum(axis=(0, 2))
    gcols = np.einsum("oc,bol->bcl", w.reshape(c_out, -1), gm)
    gcols = gcols.reshape(b, x_shape[1], 3, 3, h_out, w_out)
    gxp = np.zeros((b, x_shape[1], h + 2, wdt + 2))
    for ki in range(3):
        for kj in range(3):
            gxp[:, :, ki : ki + 2 * h_out : 2, kj : kj + 2 * w_out : 2] += gcols[:, :, ki, kj]
    return gxp[:, :, 1:-1, 1:-1], gw, gb


def linear(x, w, bias=None):
    """x: (B, n_in); w: (n_out, n_in). Returns (out, cache)."""
    out = x @ w.T
    if bias is not None:
        out = out + bias
    return out, x


def linear_backward(g, w, cache, has_bias=True):
    x = cache
    gw = g.T @ x
    gx = g @ w
    gb = g.sum(axis=0) if has_bias else None
    return gx, gw, gb


def global_avg_pool(x):
    """(B, C, H, W) -> (B, C)."""
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(g, shape):
    b, c, h, w = shape
    return np.broadcast_to(g[:, :, None, None], shape) / (h * w)
