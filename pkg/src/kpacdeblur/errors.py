"""Exception types raised across the package.

Everything derives from ``ValueError`` so callers that only care about bad
input can catch a single class.
"""


class KpacError(ValueError):
    pass


class ShapeMismatchError(KpacError):
    pass


class NetpbmError(KpacError):
    pass


class MalformedHeaderError(NetpbmError):
    pass


class TruncatedPayloadError(NetpbmError):
    pass


class UnsupportedMagicError(NetpbmError):
    pass


class KernelSizeError(KpacError):
    """Kernel does not fit its grid, or a requested size cannot hold its support."""


class SingularSpectrumError(KpacError):
    pass


class ZeroSumKernelError(KpacError):
    pass


class ScaleError(KpacError):
    pass


class ConfigError(KpacError):
    pass


class WeightFileError(KpacError):
    pass


class BadMagicError(WeightFileError):
    pass


class TruncatedWeightsError(WeightFileError):
    pass
