"""Named-tensor checkpoint container.

Layout (little-endian)::

    b"NSCK" | u16 version | u32 meta_len | meta (UTF-8 JSON) | u32 n_tensors
    per tensor: u16 name_len | name (UTF-8) | u8 ndim | u32[ndim] dims | f64[prod(dims)] payload
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import CompatibilityError

MAGIC = b"NSCK"
VERSION = 1


def save_checkpoint(path: str | Path, tensors: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    meta_raw = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<HI", VERSION, len(meta_raw)) + meta_raw)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype="<f8")
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw_name)) + raw_name)
            fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CompatibilityError(f"{path}: not a neurostream checkpoint")
    version, meta_len = struct.unpack_from("<HI", raw, 4)
    if version != VERSION:
        raise CompatibilityError(f"{path}: unsupported checkpoint version {version}")
    off = 10
    meta = json.loads(raw[off : off + meta_len].decode("utf-8"))
    off += meta_len
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(raw, "<f8", size, off).reshape(shape).astype(np.float64)
        off += 8 * size
    return tensors, meta


def checkpoint_scalar_count(path: str | Path) -> int:
    """Trainable scalars in a checkpoint; tensors listed in ``meta["buffers"]`` are not counted."""
    tensors, meta = load_checkpoint(path)
    buffers = set(meta.get("buffers", ()))
    return sum(a.size for name, a in tensors.items() if name not in buffers)
