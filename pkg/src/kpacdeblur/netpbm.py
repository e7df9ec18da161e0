"""Binary netpbm (P5 grayscale / P6 color) reading and writing."""

from __future__ import annotations

import os

import numpy as np

from .errors import MalformedHeaderError, TruncatedPayloadError, UnsupportedMagicError
from .image import Image, as_image

__all__ = ["load_netpbm", "save_netpbm", "decode_netpbm", "encode_netpbm"]

_WS = b" \t\n\r\v\f"


def _header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last one.
    """
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and (buf[pos] in _WS or buf[pos] == ord("#")):
            if buf[pos] == ord("#"):
                while pos < n and buf[pos] not in b"\n\r":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and buf[pos] not in _WS and buf[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise MalformedHeaderError("unexpected end of header")
        tokens.append(buf[start:pos])
    if pos >= n or buf[pos] not in _WS:
        raise MalformedHeaderError("header must end with a single whitespace byte")
    return tokens, pos


def decode_netpbm(buf: bytes) -> Image:
    if len(buf) < 2 or buf[0:1] != b"P":
        raise MalformedHeaderError("missing netpbm magic")
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        if magic in (b"P1", b"P2", b"P3", b"P4", b"P7"):
            raise UnsupportedMagicError(f"unsupported netpbm variant {magic.decode()}")
        raise MalformedHeaderError(f"bad magic {magic!r}")
    tokens, end = _header_tokens(buf[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedHeaderError(f"non-numeric header fields {tokens!r}") from None
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise MalformedHeaderError(f"invalid header values {width}x{height} maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    offset = 2 + end + 1
    need = count * dtype.itemsize
    if len(buf) - offset < need:
        raise TruncatedPayloadError(f"payload has {len(buf) - offset} bytes, expected {need}")
    samples = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    data = samples.astype(np.float64).reshape(height, width, channels) / maxval
    return Image(data)


def load_netpbm(path) -> Image:
    with open(path, "rb") as f:
        return decode_netpbm(f.read())


def encode_netpbm(image, bit_depth: int = 8) -> bytes:
    image = as_image(image)
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    maxval = 255 if bit_depth == 8 else 65535
    v = np.clip(image.data, 0.0, 1.0) * maxval
    # round half away from zero; v is nonnegative here
    q = np.floor(v + 0.5).astype(np.int64)
    payload = q.astype(">u2" if bit_depth == 16 else "u1").tobytes()
    magic = "P6" if image.channels == 3 else "P5"
    header = f"{magic}\n{image.width} {image.height}\n{maxval}\n".encode("ascii")
    return header + payload


def save_netpbm(image, path, bit_depth: int = 8) -> None:
    data = encode_netpbm(image, bit_depth)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)
