"""NHWC convolution kernels and their exact gradients, in plain numpy.

Tap arrays are laid out ``(kh, kw, in_c, out_c)``. Convolution here means
cross-correlation, as in every deep-learning framework.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ShapeMismatchError

__all__ = [
    "LEAKY_SLOPE",
    "out_size",
    "conv2d",
    "conv2d_backward",
    "conv_transpose2d",
    "conv_transpose2d_backward",
    "leaky_relu",
    "sigmoid",
]

LEAKY_SLOPE = 0.2


def out_size(n: int, k: int, stride: int, dilation: int, padding: str) -> tuple[int, int, int]:
    """Output length and (leading, trailing) zero padding along one axis.

    ``same`` padding splits the overhang evenly, putting the odd pixel on the
    trailing side.
    """
    eff = (k - 1) * dilation + 1
    if padding == "same":
        n_out = math.ceil(n / stride)
        total = max((n_out - 1) * stride + eff - n, 0)
        return n_out, total // 2, total - total // 2
    if padding == "valid":
        n_out = (n - eff) // stride + 1
        if n_out < 1:
            raise ShapeMismatchError(f"valid convolution of {n} samples with extent {eff} is empty")
        return n_out, 0, 0
    raise ConfigError(f"unknown padding {padding!r}")


def _stride2(stride) -> tuple[int, int]:
    return (stride, stride) if isinstance(stride, int) else tuple(stride)


def _geometry(shape, kh, kw, stride, dilation, padding):
    _, h, w, _ = shape
    sy, sx = _stride2(stride)
    ho, pt, pb = out_size(h, kh, sy, dilation, padding)
    wo, pl, pr = out_size(w, kw, sx, dilation, padding)
    return (sy, sx), (ho, wo), ((0, 0), (pt, pb), (pl, pr), (0, 0))


def _im2col(xp, kh, kw, ho, wo, sy, sx, d):
    n, _, _, c = xp.shape
    cols = np.empty((n, ho, wo, kh, kw, c), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i * d : i * d + (ho - 1) * sy + 1 : sy,
                                        j * d : j * d + (wo - 1) * sx + 1 : sx, :]
    return cols.reshape(n * ho * wo, kh * kw * c)


def _col2im(dcols, xp_shape, kh, kw, ho, wo, sy, sx, d):
    n, _, _, c = xp_shape
    dcols = dcols.reshape(n, ho, wo, kh, kw, c)
    dxp = np.zeros(xp_shape, dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i * d : i * d + (ho - 1) * sy + 1 : sy,
                j * d : j * d + (wo - 1) * sx + 1 : sx, :] += dcols[:, :, :, i, j, :]
    return dxp


def _unpad(xp, pads):
    (_, _), (pt, pb), (pl, pr), _ = pads
    return xp[:, pt : xp.shape[1] - pb, pl : xp.shape[2] - pr, :]


def conv2d(x, w, b=None, stride=1, dilation: int = 1, padding: str = "same", keep_cols: bool = False):
    """Strided, dilated 2-D convolution.

    Returns ``out`` or, with ``keep_cols``, ``(out, ctx)`` where ``ctx`` holds
    what :func:`conv2d_backward` needs.
    """
    kh, kw, ci, co = w.shape
    if x.ndim != 4 or x.shape[3] != ci:
        raise ShapeMismatchError(f"input {x.shape} does not match taps {w.shape}")
    (sy, sx), (ho, wo), pads = _geometry(x.shape, kh, kw, stride, dilation, padding)
    xp = np.pad(x, pads)
    cols = _im2col(xp, kh, kw, ho, wo, sy, sx, dilation)
    out = (cols @ w.reshape(-1, co)).reshape(x.shape[0], ho, wo, co)
    if b is not None:
        out += b
    if keep_cols:
        return out, (cols, xp.shape, pads, (sy, sx), (ho, wo), dilation)
    return out


def conv2d_backward(gout, w, ctx, need_dx: bool = True):
    """Gradients ``(dx, dw, db)`` of :func:`conv2d` given the upstream gradient."""
    cols, xp_shape, pads, (sy, sx), (ho, wo), d = ctx
    kh, kw, ci, co = w.shape
    g2 = gout.reshape(-1, co)
    dw = (cols.T @ g2).reshape(w.shape)
    db = g2.sum(axis=0)
    dx = None
    if need_dx:
        dcols = g2 @ w.reshape(-1, co).T
        dx = _unpad(_col2im(dcols, xp_shape, kh, kw, ho, wo, sy, sx, d), pads)
    return dx, dw, db


def conv_transpose2d(x, w, b=None, stride: int = 2):
    """Transposed convolution producing ``stride*H x stride*W`` outputs.

    Defined as the input-gradient of a same-padded ``stride``-strided
    :func:`conv2d` whose taps are ``w`` with its channel axes swapped. Taps
    ``w`` are ``(kh, kw, in_c, out_c)`` from this layer's point of view.
    """
    kh, kw, ci, co = w.shape
    if stride < 1:
        raise ConfigError(f"stride must be positive, got {stride}")
    if x.ndim != 4 or x.shape[3] != ci:
        raise ShapeMismatchError(f"input {x.shape} does not match taps {w.shape}")
    n, h, wd, _ = x.shape
    big = (n, stride * h, stride * wd, co)
    (sy, sx), (ho, wo), pads = _geometry(big, kh, kw, stride, 1, "same")
    if (ho, wo) != (h, wd):
        raise ConfigError(f"transposed conv geometry mismatch {(ho, wo)} vs {(h, wd)}")
    wc = w.transpose(0, 1, 3, 2).reshape(-1, ci)  # forward conv taps (kh*kw*co, ci)
    dcols = x.reshape(-1, ci) @ wc.T
    xp_shape = (n, big[1] + pads[1][0] + pads[1][1], big[2] + pads[2][0] + pads[2][1], co)
    out = _unpad(_col2im(dcols, xp_shape, kh, kw, ho, wo, sy, sx, 1), pads)
    if b is not None:
        out = out + b
    return out


def conv_transpose2d_backward(gout, x, w, stride: int = 2, need_dx: bool = True):
    kh, kw, ci, co = w.shape
    (sy, sx), (ho, wo), pads = _geometry(gout.shape, kh, kw, stride, 1, "same")
    cols = _im2col(np.pad(gout, pads), kh, kw, ho, wo, sy, sx, 1)  # (n*h*w, kh*kw*co)
    x2 = x.reshape(-1, ci)
    wc = w.transpose(0, 1, 3, 2).reshape(-1, ci)
    dwc = (cols.T @ x2).reshape(kh, kw, co, ci)
    dw = dwc.transpose(0, 1, 3, 2)
    db = gout.sum(axis=(0, 1, 2))
    dx = (cols @ wc).reshape(x.shape) if need_dx else None
    return dx, dw, db


def leaky_relu(x, slope: float = LEAKY_SLOPE):
    return np.where(x >= 0, x, slope * x)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out
