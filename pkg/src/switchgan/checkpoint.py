"""Binary checkpoint format: a JSON config block plus named float64 tensors.

Layout (all little-endian):

    bytes 0..7    magic b"SWGANCKP"
    u32           format version (1)
    u64           length of the JSON config block
    ...           UTF-8 JSON, keys sorted
    u32           tensor count
    per tensor:   u16 name length, UTF-8 name,
                  u8 ndim, ndim * u32 dims,
                  prod(dims) * f64 values (row-major)

Tensors are written in sorted name order so identical contents always
produce identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"SWGANCKP"
VERSION = 1


def save_checkpoint(path, config: dict, tensors: dict[str, np.ndarray]) -> None:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def _read(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        if _read(f, len(MAGIC), "magic") != MAGIC:
            raise FormatError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", _read(f, 4, "version"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        (blob_len,) = struct.unpack("<Q", _read(f, 8, "config length"))
        config = json.loads(_read(f, blob_len, "config").decode("utf-8"))
        (count,) = struct.unpack("<I", _read(f, 4, "tensor count"))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read(f, 2, "name length"))
            name = _read(f, name_len, "name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read(f, 1, "ndim"))
            dims = struct.unpack(f"<{ndim}I", _read(f, 4 * ndim, "dims"))
            n = int(np.prod(dims)) if ndim else 1
            data = np.frombuffer(_read(f, 8 * n, f"tensor {name}"), dtype="<f8")
            tensors[name] = data.reshape(dims).astype(np.float64)
        return config, tensors
