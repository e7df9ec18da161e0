"""DFTs, Wiener inverse kernels, and kernel resampling.

Two kernel representations are used throughout:

* :class:`~kpacdeblur.image.Kernel` -- a small odd square array whose center
  tap sits in the middle.
* a *grid* -- a plain 2-D ndarray the size of an image, with the kernel's
  center tap at index ``(0, 0)`` and negative offsets wrapped to the far
  edges. This is the layout in which circular convolution is a spectral
  product. Inverse kernels always live on grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import KernelSizeError, ScaleError, SingularSpectrumError
from .image import Kernel

__all__ = [
    "ScaleFactor",
    "dft2",
    "idft2",
    "embed_kernel",
    "regrid",
    "centered_from_grid",
    "zero_pad_upsample",
    "sinc_upsample",
    "wiener_inverse_kernel",
    "upsample_inverse_kernel",
    "dilate_kernel",
    "lanczos_resample",
    "DEFAULT_EPS",
]

DEFAULT_EPS = 1e-2
IMAG_TOL = 1e-8
SINGULAR_TOL = 1e-12


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


@dataclass(frozen=True)
class ScaleFactor:
    """A rational upsampling factor ``numerator / denominator >= 1``."""

    numerator: int
    denominator: int = 1

    def __post_init__(self):
        if self.numerator < 1 or self.denominator < 1:
            raise ScaleError(f"scale terms must be positive, got {self.numerator}/{self.denominator}")
        if self.numerator < self.denominator:
            raise ScaleError(f"downscaling is not supported (s = {self.numerator}/{self.denominator})")

    @classmethod
    def of(cls, s) -> "ScaleFactor":
        if isinstance(s, ScaleFactor):
            return s
        f = Fraction(s).limit_denominator(1000) if isinstance(s, float) else Fraction(s)
        if f <= 0:
            raise ScaleError(f"scale must be positive, got {s}")
        return cls(f.numerator, f.denominator)

    @property
    def value(self) -> float:
        return self.numerator / self.denominator

    @property
    def is_integer(self) -> bool:
        return self.denominator == 1

    def target(self, n: int) -> int:
        return _round_half_up(Fraction(self.numerator, self.denominator) * n)

    def effective(self, n: int) -> float:
        """Per-axis ratio actually realized on an ``n``-sample axis."""
        return self.target(n) / n

    def __str__(self):
        return str(self.numerator) if self.is_integer else f"{self.numerator}/{self.denominator}"


def dft2(x) -> np.ndarray:
    """Unnormalized 2-D DFT with the DC bin at ``(0, 0)``."""
    x = np.asarray(x)
    if x.ndim != 2 or x.size == 0:
        raise ValueError(f"dft2 needs a nonempty 2-D array, got shape {x.shape}")
    return np.fft.fft2(x)


def idft2(X, check_real: bool = True) -> np.ndarray:
    """Inverse of :func:`dft2` (``1/(H*W)`` normalization), returning the real part.

    With ``check_real`` the discarded imaginary residue is asserted to stay
    below 1e-8 in max-norm relative to the signal scale.
    """
    x = np.fft.ifft2(np.asarray(X))
    if check_real:
        scale = max(1.0, float(np.max(np.abs(x.real), initial=0.0)))
        resid = float(np.max(np.abs(x.imag), initial=0.0))
        if resid >= IMAG_TOL * scale:
            raise ValueError(f"inverse DFT is not real: imaginary residue {resid:.3g}")
    return x.real.copy()


def _offsets(n: int) -> np.ndarray:
    """Signed offsets of the indices of an origin-centered axis of length ``n``."""
    i = np.arange(n)
    return np.where(i < (n + 1) // 2, i, i - n)


def regrid(g, h: int, w: int) -> np.ndarray:
    """Re-wrap an origin-centered grid onto an ``h x w`` grid.

    Offsets that do not exist on the target grid are dropped, so shrinking a
    grid truncates the kernel's support.
    """
    g = np.asarray(g, dtype=np.float64)
    out = np.zeros((h, w))
    oy, ox = _offsets(g.shape[0]), _offsets(g.shape[1])
    ty, tx = _offsets(h), _offsets(w)
    keep_y = (oy >= ty.min()) & (oy <= ty.max())
    keep_x = (ox >= tx.min()) & (ox <= tx.max())
    rows = np.mod(oy[keep_y], h)
    cols = np.mod(ox[keep_x], w)
    out[np.ix_(rows, cols)] = g[np.ix_(keep_y, keep_x)]
    return out


def embed_kernel(k, h: int, w: int) -> np.ndarray:
    """Place a centered kernel on an ``h x w`` grid with its center tap at ``(0, 0)``."""
    taps = k.taps if isinstance(k, Kernel) else Kernel(k).taps
    if taps.shape[0] > min(h, w):
        raise KernelSizeError(f"{taps.shape[0]}x{taps.shape[0]} kernel does not fit a {h}x{w} grid")
    c = (taps.shape[0] - 1) // 2
    return regrid(np.roll(taps, (-c, -c), axis=(0, 1)), h, w)


def centered_from_grid(g) -> Kernel:
    """Inverse of :func:`embed_kernel` for odd-sized grids."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape[0] != g.shape[1] or g.shape[0] % 2 == 0:
        raise KernelSizeError(f"grid must be odd and square to center it, got {g.shape}")
    return Kernel(np.fft.fftshift(g))


def _pad_axis(X: np.ndarray, axis: int, n_out: int) -> np.ndarray:
    n = X.shape[axis]
    if n_out == n:
        return X
    Xm = np.moveaxis(X, axis, 0)
    out = np.zeros((n_out,) + Xm.shape[1:], dtype=complex)
    pos = (n + 1) // 2  # bins 0 .. ceil(n/2)-1
    neg = n // 2  # bins -floor(n/2) .. -1
    out[:pos] = Xm[:pos]
    if neg:
        out[n_out - neg :] = Xm[n - neg :]
    if n % 2 == 0:
        # Nyquist bin -n/2 is shared with +n/2 after padding
        half = Xm[n // 2] / 2
        out[n_out - n // 2] = half
        out[n // 2] = half
    return np.moveaxis(out, 0, axis)


def zero_pad_upsample(X, s) -> np.ndarray:
    """Zero-pad a spectrum to ``(round(s*H), round(s*W))`` bins.

    Input bins keep their signed frequency; everything outside the original
    band is zero. Even-length Nyquist bins are split evenly between the
    positive and negative positions so real signals stay real.
    """
    s = ScaleFactor.of(s)
    X = np.asarray(X, dtype=complex)
    h_out, w_out = s.target(X.shape[0]), s.target(X.shape[1])
    return _pad_axis(_pad_axis(X, 0, h_out), 1, w_out)


def sinc_upsample(g, s) -> np.ndarray:
    """Band-limited upsampling of an origin-centered grid.

    The result is ``1/s^2 * (g upsampled by s)``: samples are interpolated
    and then divided by the area ratio, so the tap sum is preserved exactly.
    """
    return idft2(zero_pad_upsample(dft2(g), s))


def wiener_inverse_kernel(k, eps: float = DEFAULT_EPS, h: int | None = None, w: int | None = None) -> np.ndarray:
    """Wiener pseudo-inverse ``F^-1(conj(F(k)) / (|F(k)|^2 + eps))`` on an ``h x w`` grid.

    ``k`` is a :class:`Kernel` or an origin-centered grid; grids are re-wrapped
    onto ``h x w`` when the sizes differ.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if isinstance(k, Kernel):
        if h is None or w is None:
            raise ValueError("grid size is required for a centered kernel")
        grid = embed_kernel(k, h, w)
    else:
        grid = np.asarray(k, dtype=np.float64)
        h = grid.shape[0] if h is None else h
        w = grid.shape[1] if w is None else w
        if grid.shape != (h, w):
            grid = regrid(grid, h, w)
    K = dft2(grid)
    mag2 = (K * K.conj()).real
    if eps == 0 and np.sqrt(mag2.min()) <= SINGULAR_TOL:
        raise SingularSpectrumError(
            f"kernel spectrum has a bin of magnitude {np.sqrt(mag2.min()):.3g}; use eps > 0"
        )
    return idft2(K.conj() / (mag2 + eps))


def upsample_inverse_kernel(kdag, s) -> np.ndarray:
    """Scale an inverse-kernel grid by ``s`` through spectral zero padding.

    Realizes ``1/s^2 * (kdag upsampled by s)``; the ``1/s^2`` comes from the
    inverse DFT normalization on the larger grid (see :func:`sinc_upsample`),
    using the effective per-axis ratios when ``s*N`` is not an integer.
    """
    return sinc_upsample(kdag, s)


def dilate_kernel(k: Kernel, rate: int) -> Kernel:
    """Spread taps ``rate`` pixels apart, zeros in between, no renormalization."""
    if int(rate) != rate or rate < 1:
        raise ValueError(f"dilation rate must be a positive integer, got {rate}")
    rate = int(rate)
    n = rate * (k.size - 1) + 1
    out = np.zeros((n, n))
    out[::rate, ::rate] = k.taps
    return Kernel(out)


def _lanczos(x: np.ndarray, a: int) -> np.ndarray:
    return np.where(np.abs(x) < a, np.sinc(x) * np.sinc(x / a), 0.0)


def _lanczos_matrix(n_in: int, n_out: int, s: float, a: int) -> np.ndarray:
    c_in, c_out = (n_in - 1) / 2, (n_out - 1) / 2
    t = (np.arange(n_out) - c_out) / s  # source coordinate relative to center
    src = np.arange(n_in) - c_in
    support = min(1.0, s)  # widen the filter when shrinking
    return _lanczos((t[:, None] - src[None, :]) * support, a) * support


def lanczos_resample(k: Kernel, s: float, window: int = 3) -> Kernel:
    """Separable Lanczos-``window`` resampling of a centered kernel by ``s``.

    Output size is ``round(s*K)``, bumped to the next odd number if needed.
    Samples are interpolated, not renormalized.
    """
    if not s > 0:
        raise ScaleError(f"scale must be positive, got {s}")
    if window < 2:
        raise ValueError(f"Lanczos window must be >= 2, got {window}")
    n_out = _round_half_up(Fraction(s).limit_denominator(10**6) * k.size)
    n_out = max(n_out, 1)
    if n_out % 2 == 0:
        n_out += 1
    M = _lanczos_matrix(k.size, n_out, s, window)
    return Kernel(M @ k.taps @ M.T)
