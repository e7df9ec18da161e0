"""Blur synthesis, inverse-kernel deconvolution and multi-scale blending."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import KernelSizeError, KpacError, ScaleError, ShapeMismatchError
from .image import Image, Kernel, as_image
from .spectral import (
    ScaleFactor,
    centered_from_grid,
    dft2,
    dilate_kernel,
    embed_kernel,
    regrid,
    upsample_inverse_kernel,
)

__all__ = [
    "BlendWeights",
    "NnlsResult",
    "convolve_circular",
    "deconvolve",
    "scaled_inverse_kernel",
    "multiscale_deconvolve",
    "nnls",
    "fit_blend_weights",
    "approx_accuracy",
    "ACCURACY_GUARD",
]

ACCURACY_GUARD = 1e-3


def _kernel_grid(k, h: int, w: int) -> np.ndarray:
    if isinstance(k, Kernel):
        return embed_kernel(k, h, w)
    g = np.asarray(k, dtype=np.float64)
    if g.ndim != 2:
        raise ShapeMismatchError(f"kernel grid must be 2-D, got shape {g.shape}")
    if g.shape == (h, w):
        return g
    if g.shape[0] > h or g.shape[1] > w:
        raise KernelSizeError(f"{g.shape} kernel grid does not fit a {h}x{w} image")
    return regrid(g, h, w)


def _spectral_filter(x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    X = np.fft.fft2(x, axes=(0, 1))
    return np.fft.ifft2(X * dft2(grid)[:, :, None], axes=(0, 1)).real


def convolve_circular(x, k) -> Image:
    """Per-channel circular convolution of an image with a kernel or grid."""
    x = as_image(x)
    grid = _kernel_grid(k, x.height, x.width)
    return Image(_spectral_filter(x.data, grid))


def deconvolve(y, kdag) -> Image:
    """Apply an inverse-kernel grid of exactly the image's size."""
    y = as_image(y)
    kdag = np.asarray(kdag, dtype=np.float64)
    if kdag.shape != (y.height, y.width):
        raise ShapeMismatchError(f"inverse kernel {kdag.shape} does not match image {y.shape[:2]}")
    return Image(_spectral_filter(y.data, kdag))


@dataclass(frozen=True, eq=False)
class BlendWeights:
    """One nonnegative scalar weight per scale."""

    scales: tuple
    weights: np.ndarray

    def __post_init__(self):
        scales = tuple(ScaleFactor.of(s) for s in self.scales)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(scales) != weights.size:
            raise ShapeMismatchError(f"{len(scales)} scales but {weights.size} weights")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise KpacError("blend weights must be finite and nonnegative")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, scales) -> "BlendWeights":
        return cls(tuple(scales), np.full(len(scales), 1.0 / len(scales)))


def scaled_inverse_kernel(kdag, s, h: int, w: int, mode: str = "upsample") -> np.ndarray:
    """Realize an inverse kernel at scale ``s`` on an ``h x w`` grid.

    ``upsample`` zero-pads the spectrum (``1/s^2 * kdag upsampled``);
    ``dilate`` spreads the taps of an odd square base grid ``s`` pixels apart.
    """
    s = ScaleFactor.of(s)
    if mode == "upsample":
        g = upsample_inverse_kernel(kdag, s)
        if g.shape[0] > h or g.shape[1] > w:
            raise KernelSizeError(f"scale {s} grows the inverse kernel to {g.shape}, larger than {h}x{w}")
        return regrid(g, h, w)
    if mode == "dilate":
        if not s.is_integer:
            raise ScaleError(f"dilation needs an integer scale, got {s}")
        return embed_kernel(dilate_kernel(centered_from_grid(kdag), s.numerator), h, w)
    raise ValueError(f"unknown mode {mode!r}")


def multiscale_deconvolve(y, kdag, blend: BlendWeights, mode: str = "upsample") -> Image:
    """Weighted sum of deconvolutions with ``kdag`` realized at each blend scale.

    Terms are accumulated in scale order so the result does not depend on
    evaluation order.
    """
    y = as_image(y)
    acc = np.zeros(y.shape)
    for s, a in zip(blend.scales, blend.weights):
        g = scaled_inverse_kernel(kdag, s, y.height, y.width, mode)
        acc += a * _spectral_filter(y.data, g)
    return Image(acc)


@dataclass(frozen=True, eq=False)
class NnlsResult:
    weights: np.ndarray
    residual: float
    converged: bool
    iterations: int


def nnls(A, b, max_iter: int | None = None, tol: float = 1e-10) -> NnlsResult:
    """Lawson-Hanson active-set solver for ``min ||A w - b||`` subject to ``w >= 0``.

    ``max_iter`` bounds the number of least-squares solves (default ``3 n``).
    When the bound is hit the current iterate is returned with
    ``converged=False``.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if A.ndim != 2 or A.shape[0] != b.size:
        raise ShapeMismatchError(f"incompatible shapes A{A.shape}, b{b.shape}")
    m, n = A.shape
    if n < 1 or m < n:
        raise ShapeMismatchError(f"need m >= n >= 1, got {m}x{n}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise KpacError("NNLS problem has non-finite entries")
    if max_iter is None:
        max_iter = 3 * n

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    grad = A.T @ b  # negative gradient of 0.5||Ax - b||^2
    iters = 0
    converged = True
    while not passive.all() and grad[~passive].max() > tol:
        if iters >= max_iter:
            converged = False
            break
        j = np.flatnonzero(~passive)[np.argmax(grad[~passive])]
        passive[j] = True
        while True:
            iters += 1
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if np.all(z[passive] > 0):
                x = z
                break
            blocking = np.flatnonzero(passive & (z <= 0))
            ratios = x[blocking] / (x[blocking] - z[blocking])
            step = ratios.min()
            x = x + step * (z - x)
            x[blocking[np.argmin(ratios)]] = 0.0
            passive &= x > np.finfo(float).eps * max(1.0, np.abs(x).max())
            x[~passive] = 0.0
            if iters >= max_iter:
                break
        grad = A.T @ (b - A @ x)
    return NnlsResult(x, float(np.linalg.norm(A @ x - b)), converged, iters)


def fit_blend_weights(per_scale_results: Sequence, target, scales=None) -> BlendWeights:
    """Least-squares nonnegative blend of per-scale results that best matches ``target``."""
    if len(per_scale_results) < 1:
        raise KpacError("need at least one per-scale result")
    target = as_image(target)
    cols = []
    for r in per_scale_results:
        r = as_image(r)
        if r.shape != target.shape:
            raise ShapeMismatchError(f"result {r.shape} does not match target {target.shape}")
        cols.append(r.data.ravel())
    res = nnls(np.stack(cols, axis=1), target.data.ravel())
    if scales is None:
        scales = range(1, len(cols) + 1)
    return BlendWeights(tuple(scales), res.weights)


def approx_accuracy(xhat, xs, guard: float = ACCURACY_GUARD) -> float:
    """``1 - mean|1 - xhat / xs|`` over pixels where ``|xs| >= guard``.

    Not clamped: badly mismatched inputs give negative values.
    """
    a, b = as_image(xhat), as_image(xs)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    keep = np.abs(b.data) >= guard
    if not keep.any():
        raise KpacError("every pixel of the reference falls below the division guard")
    ratio = a.data[keep] / b.data[keep]
    return float(1.0 - np.mean(np.abs(1.0 - ratio)))
