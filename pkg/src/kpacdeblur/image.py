"""Image and kernel value types, quality metrics and blur-kernel synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import KernelSizeError, KpacError, ShapeMismatchError, ZeroSumKernelError

__all__ = [
    "Image",
    "Kernel",
    "as_image",
    "psnr",
    "mae",
    "make_kernel",
    "normalize_kernel",
    "DISC_SUBSAMPLES",
]

DISC_SUBSAMPLES = 16


@dataclass(frozen=True, eq=False)
class Image:
    """An ``H x W x C`` raster of float64 samples, ``C`` in {1, 3}.

    Samples are nominally in [0, 1]; deconvolution results may overshoot and
    are only clamped when written to disk.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ShapeMismatchError(f"image must be 2-D or 3-D, got shape {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1 or c not in (1, 3):
            raise ShapeMismatchError(f"invalid image shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise KpacError("image contains non-finite samples")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def clipped(self) -> "Image":
        return Image(np.clip(self.data, 0.0, 1.0))

    def __repr__(self):
        return f"Image({self.height}x{self.width}x{self.channels})"


def as_image(x) -> Image:
    return x if isinstance(x, Image) else Image(x)


@dataclass(frozen=True, eq=False)
class Kernel:
    """Odd-sized square filter with its center tap at ``((K-1)/2, (K-1)/2)``.

    Sum-to-one is only guaranteed after :func:`normalize_kernel`; inverse
    kernels carry negative taps and are never renormalized.
    """

    taps: np.ndarray

    def __post_init__(self):
        t = np.array(self.taps, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] % 2 == 0:
            raise KernelSizeError(f"kernel must be odd and square, got shape {t.shape}")
        t.setflags(write=False)
        object.__setattr__(self, "taps", t)

    @property
    def size(self) -> int:
        return self.taps.shape[0]

    @property
    def center(self) -> int:
        return (self.size - 1) // 2

    def __repr__(self):
        return f"Kernel({self.size}x{self.size}, sum={self.taps.sum():.6g})"


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a.data, b.data


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0, over all channels.

    Identical inputs return ``math.inf``.
    """
    x, y = _pair(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def mae(a, b) -> float:
    x, y = _pair(a, b)
    return float(np.mean(np.abs(x - y)))


def _min_size(kind: str, param: float) -> int:
    if kind == "disc":
        return 2 * math.ceil(param) + 1
    n = math.ceil(6.0 * param)
    return n if n % 2 == 1 else n + 1


def make_kernel(kind: str, param: float, size: int | None = None) -> Kernel:
    """Synthesize a normalized blur kernel.

    Parameters
    ----------
    kind : {"disc", "gaussian"}
        ``disc`` is an antialiased indicator of radius ``param``: each tap is
        the fraction of its pixel inside the disc, estimated on a 16x16
        subpixel lattice. ``gaussian`` samples ``exp(-r^2 / 2 sigma^2)`` with
        ``sigma = param``.
    param : float
        Radius or standard deviation, in pixels.
    size : int, optional
        Odd kernel width. Defaults to the smallest size that holds the support.
    """
    if kind not in ("disc", "gaussian"):
        raise KpacError(f"unknown kernel kind {kind!r}")
    if not param > 0:
        raise KpacError(f"kernel parameter must be positive, got {param}")
    min_size = _min_size(kind, param)
    if size is None:
        size = min_size
    if size % 2 == 0 or size < min_size:
        raise KernelSizeError(
            f"{kind} kernel with param {param} needs an odd size >= {min_size}, got {size}"
        )
    c = (size - 1) // 2
    offs = np.arange(size, dtype=np.float64) - c
    if kind == "gaussian":
        r2 = offs[:, None] ** 2 + offs[None, :] ** 2
        taps = np.exp(-r2 / (2.0 * param * param))
    else:
        sub = (np.arange(DISC_SUBSAMPLES) + 0.5) / DISC_SUBSAMPLES - 0.5
        pos = (offs[:, None] + sub[None, :]).ravel()  # size*S subpixel centers per axis
        inside = (pos[:, None] ** 2 + pos[None, :] ** 2) <= param * param
        taps = inside.reshape(size, DISC_SUBSAMPLES, size, DISC_SUBSAMPLES).mean(axis=(1, 3))
    return normalize_kernel(Kernel(taps))


def normalize_kernel(k: Kernel) -> Kernel:
    total = k.taps.sum()
    if total == 0.0:
        raise ZeroSumKernelError("cannot normalize a kernel whose taps sum to zero")
    return Kernel(k.taps / total)
