"""Binary container for named float64 arrays plus a plain-text metadata block.

Layout (all integers little-endian):

    bytes 0..3   magic ``b"WXTN"``
    bytes 4..7   format version, u32 (currently 1)
    u64          metadata length, followed by that many UTF-8 bytes
    u64          entry count
    per entry:   u32 name length + UTF-8 name
                 u32 ndim, then ndim x u64 extents
                 row-major float64 little-endian payload

Entries round-trip bitwise; the metadata block is free-form text (the model
checkpoint stores its configuration there).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import IngestionError

MAGIC = b"WXTN"
VERSION = 1


def save_arrays(path, arrays: Mapping[str, np.ndarray], meta: str = "") -> None:
    """Write ``arrays`` (in mapping order) and ``meta`` to ``path``."""
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    meta_bytes = meta.encode("utf-8")
    chunks.append(struct.pack("<Q", len(meta_bytes)))
    chunks.append(meta_bytes)
    chunks.append(struct.pack("<Q", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.astype("<f8", copy=False).tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_arrays(path) -> tuple[dict[str, np.ndarray], str]:
    """Read a container written by :func:`save_arrays`."""
    blob = Path(path).read_bytes()
    view = memoryview(blob)
    offset = 0

    def unpack(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise IngestionError(f"{path}: truncated container")
        values = struct.unpack_from(fmt, view, offset)
        offset += size
        return values

    if bytes(view[:4]) != MAGIC:
        raise IngestionError(f"{path}: not a parameter container (bad magic)")
    offset = 4
    (version,) = unpack("<I")
    if version != VERSION:
        raise IngestionError(f"{path}: unsupported container version {version}")
    (meta_len,) = unpack("<Q")
    meta = bytes(view[offset : offset + meta_len]).decode("utf-8")
    offset += meta_len
    (count,) = unpack("<Q")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = unpack("<I")
        name = bytes(view[offset : offset + name_len]).decode("utf-8")
        offset += name_len
        (ndim,) = unpack("<I")
        shape = unpack(f"<{ndim}Q") if ndim else ()
        n_values = int(np.prod(shape)) if ndim else 1
        payload = view[offset : offset + 8 * n_values]
        if len(payload) != 8 * n_values:
            raise IngestionError(f"{path}: truncated payload for entry {name!r}")
        offset += 8 * n_values
        arrays[name] = (
            np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
        )
    return arrays, meta
