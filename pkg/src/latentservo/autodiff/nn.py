"""Network layers on top of the tensor primitives.

Only the handful of layers the four representation methods and the policy
network need: fully-connected, strided 2-D convolution with "same" zero
padding, and the spatial-softmax coordinate readout.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, _record, add, matmul


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x (N, in) @ w (in, out) + b (out,) broadcast over rows."""
    return add(matmul(x, w), b)


def _same_pad(size: int, kernel: int, stride: int) -> tuple:
    out = -(-size // stride)  # ceil
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    return cols


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """Zero-padded "same" convolution: x (N,C,H,W), w (F,C,kh,kw), b (F,)."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: need 4-D input/kernel, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    f, ck, kh, kw = w.shape
    if ck != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {ck}")
    oh, pt, pb = _same_pad(h, kh, stride)
    ow, pl, pr = _same_pad(wd, kw, stride)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    cols = _im2col(xp, kh, kw, stride, oh, ow)            # (N,C,kh,kw,OH,OW)
    cols2 = cols.reshape(n, c * kh * kw, oh * ow)
    wf = w.data.reshape(f, c * kh * kw)
    out_data = np.einsum("fk,nkp->nfp", wf, cols2).reshape(n, f, oh, ow)
    out_data = out_data + b.data.reshape(1, f, 1, 1)
    out = Tensor(out_data)

    def bwd(g):
        gf = g.reshape(n, f, oh * ow)
        gw = np.einsum("nfp,nkp->fk", gf, cols2).reshape(w.shape)
        gb = g.sum(axis=(0, 2, 3))
        gcols = np.einsum("fk,nfp->nkp", wf, gf).reshape(n, c, kh, kw, oh, ow)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += gcols[:, :, i, j]
        gx = gxp[:, :, pt:pt + h, pl:pl + wd].astype(x.data.dtype, copy=False)
        return gx, gw.astype(w.data.dtype, copy=False), gb.astype(b.data.dtype, copy=False)

    return _record(out, (x, w, b), bwd, "conv2d")


def _axis_coords(n: int, dtype) -> np.ndarray:
    # normalized pixel coordinates in [-1, 1]; a single pixel sits at the center
    if n == 1:
        return np.zeros(1, dtype=dtype)
    return np.linspace(-1.0, 1.0, n, dtype=dtype)


def spatial_softmax(x: Tensor, temperature: float = 1.0) -> Tensor:
    """Per-channel softmax over pixels, then expected (x, y) coordinates.

    Input (N, C, H, W) or (C, H, W); output (N, 2C) or (2C,), interleaved
    (x_0, y_0, x_1, y_1, ...) with both axes normalized to [-1, 1].
    """
    if temperature <= 0:
        raise ValueError(f"spatial_softmax: temperature must be > 0, got {temperature}")
    squeeze = x.data.ndim == 3
    data = x.data[None] if squeeze else x.data
    if data.ndim != 4:
        raise ShapeError(f"spatial_softmax: need (C,H,W) or (N,C,H,W), got {x.shape}")
    n, c, h, w = data.shape
    flat = (data.reshape(n, c, h * w) / temperature).astype(np.float64)
    flat = flat - flat.max(axis=2, keepdims=True)
    e = np.exp(flat)
    p = e / e.sum(axis=2, keepdims=True)                  # (N,C,HW) float64
    xs = _axis_coords(w, np.float64)
    ys = _axis_coords(h, np.float64)
    grid_x = np.broadcast_to(xs, (h, w)).reshape(h * w)
    grid_y = np.broadcast_to(ys[:, None], (h, w)).reshape(h * w)
    ex = p @ grid_x                                       # (N,C)
    ey = p @ grid_y
    out_data = np.empty((n, 2 * c), dtype=x.data.dtype)
    out_data[:, 0::2] = ex
    out_data[:, 1::2] = ey
    out = Tensor(out_data[0] if squeeze else out_data)

    def bwd(g):
        gm = g[None] if squeeze else g                    # (N,2C)
        gx = gm[:, 0::2].astype(np.float64)
        gy = gm[:, 1::2].astype(np.float64)
        # d ex / d a = p * (grid_x - ex) / T  (softmax expectation rule)
        dev_x = grid_x[None, None, :] - ex[:, :, None]
        dev_y = grid_y[None, None, :] - ey[:, :, None]
        ga = p * (gx[:, :, None] * dev_x + gy[:, :, None] * dev_y) / temperature
        ga = ga.reshape(n, c, h, w).astype(x.data.dtype, copy=False)
        return (ga[0] if squeeze else ga,)

    return _record(out, (x,), bwd, "spatial_softmax")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def he_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)
