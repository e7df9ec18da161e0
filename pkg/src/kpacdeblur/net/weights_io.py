"""KPACW1 weight files.

Layout: the magic ``KPACW1\\n``, a little-endian ``u32`` header length, a
UTF-8 JSON header, then every parameter as row-major little-endian float32
in header order. The header stores the network config and, per parameter,
its name, shape and byte offset into the payload. Adam moments are not
saved.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagicError, ShapeMismatchError, TruncatedWeightsError, WeightFileError
from .model import NetworkConfig, NetworkWeights, layer_plan

__all__ = ["MAGIC", "save_weights", "load_weights", "encode_weights", "decode_weights"]

MAGIC = b"KPACW1\n"
_DTYPE = np.dtype("<f4")


def encode_weights(w: NetworkWeights) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, arr in w.params.items():
        data = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)
    header = {
        "config": w.config.to_dict() if w.config is not None else None,
        "params": entries,
    }
    hbytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(hbytes)) + hbytes + b"".join(chunks)


def decode_weights(blob: bytes) -> NetworkWeights:
    if not blob.startswith(MAGIC):
        raise BadMagicError(f"expected magic {MAGIC!r}, got {blob[:len(MAGIC)]!r}")
    pos = len(MAGIC)
    if len(blob) < pos + 4:
        raise TruncatedWeightsError("file ends inside the header length")
    (hlen,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if len(blob) < pos + hlen:
        raise TruncatedWeightsError(f"header declares {hlen} bytes, {len(blob) - pos} available")
    try:
        header = json.loads(blob[pos : pos + hlen].decode("utf-8"))
        entries = header["params"]
        cfg = NetworkConfig.from_dict(header["config"]) if header.get("config") is not None else None
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise WeightFileError(f"unreadable weight header: {exc}") from exc
    payload = memoryview(blob)[pos + hlen :]
    params = {}
    expected = 0
    for e in entries:
        shape = tuple(int(d) for d in e["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = int(e["offset"])
        end = start + count * _DTYPE.itemsize
        if start != expected:
            raise WeightFileError(f"{e['name']}: offset {start}, expected {expected}")
        if end > len(payload):
            raise TruncatedWeightsError(f"{e['name']}: needs bytes {start}..{end}, payload has {len(payload)}")
        params[e["name"]] = np.frombuffer(payload[start:end], dtype=_DTYPE).astype(np.float64).reshape(shape)
        expected = end
    if expected != len(payload):
        raise TruncatedWeightsError(f"payload has {len(payload) - expected} bytes beyond the declared shapes")
    if cfg is not None:
        _check_against_plan(params, cfg)
    return NetworkWeights(params, cfg)


def _check_against_plan(params: dict, cfg: NetworkConfig) -> None:
    want = {}
    for spec in layer_plan(cfg):
        want[f"{spec.name}.w"] = tuple(spec.shape)
        want[f"{spec.name}.b"] = (spec.shape[-1],)
    got = {k: a.shape for k, a in params.items()}
    if got != want:
        diff = sorted(set(got.items()) ^ set(want.items()))
        raise ShapeMismatchError(f"parameters do not match the stored config: {diff[:4]}")


def save_weights(w: NetworkWeights, path) -> None:
    """Write ``w`` atomically (temporary file, then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_weights(w))
    os.replace(tmp, path)


def load_weights(path) -> NetworkWeights:
    return decode_weights(Path(path).read_bytes())
