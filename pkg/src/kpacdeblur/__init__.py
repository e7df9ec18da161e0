"""Inverse-kernel defocus deblurring and a from-scratch KPAC network."""

from .deconv import (
    BlendWeights,
    NnlsResult,
    approx_accuracy,
    convolve_circular,
    deconvolve,
    fit_blend_weights,
    multiscale_deconvolve,
    nnls,
    scaled_inverse_kernel,
)
from .errors import KpacError
from .image import Image, Kernel, mae, make_kernel, normalize_kernel, psnr
from .netpbm import load_netpbm, save_netpbm
from .spectral import (
    ScaleFactor,
    dft2,
    dilate_kernel,
    embed_kernel,
    idft2,
    lanczos_resample,
    upsample_inverse_kernel,
    wiener_inverse_kernel,
    zero_pad_upsample,
)

__version__ = "0.1.0"

__all__ = [
    "BlendWeights",
    "Image",
    "Kernel",
    "KpacError",
    "NnlsResult",
    "ScaleFactor",
    "approx_accuracy",
    "convolve_circular",
    "deconvolve",
    "dft2",
    "dilate_kernel",
    "embed_kernel",
    "fit_blend_weights",
    "idft2",
    "lanczos_resample",
    "load_netpbm",
    "mae",
    "make_kernel",
    "multiscale_deconvolve",
    "nnls",
    "normalize_kernel",
    "psnr",
    "save_netpbm",
    "scaled_inverse_kernel",
    "upsample_inverse_kernel",
    "wiener_inverse_kernel",
    "zero_pad_upsample",
]
