"""Binary tensor container shared by checkpoints and vocabulary files.

Layout (all integers 4-byte little-endian unsigned)::

    b"TSTE" | version | record count |
    per record: name length | UTF-8 name | rank | dims... | float32 LE payload
"""

from __future__ import annotations

import hashlib
import io
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError

MAGIC = b"TSTE"
VERSION = 1
_U32 = struct.Struct("<I")


def dumps(records: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_U32.pack(VERSION))
    buf.write(_U32.pack(len(records)))
    for name, arr in records.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        buf.write(_U32.pack(len(raw)))
        buf.write(raw)
        buf.write(_U32.pack(arr.ndim))
        for d in arr.shape:
            buf.write(_U32.pack(d))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> dict[str, np.ndarray]:
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise FormatError("not a tensor container (bad magic)")
    pos = 4

    def u32() -> int:
        nonlocal pos
        if pos + 4 > len(view):
            raise FormatError("truncated tensor container")
        (v,) = _U32.unpack_from(view, pos)
        pos += 4
        return v

    version = u32()
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(u32()):
        n = u32()
        name = bytes(view[pos : pos + n]).decode("utf-8")
        pos += n
        dims = tuple(u32() for _ in range(u32()))
        count = int(np.prod(dims, dtype=np.int64))
        end = pos + 4 * count
        if end > len(view):
            raise FormatError(f"truncated payload for record {name!r}")
        out[name] = np.frombuffer(view[pos:end], dtype="<f4").astype(np.float32).reshape(dims)
        pos = end
    if pos != len(view):
        raise FormatError("trailing bytes after last record")
    return out


def save(path, records: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(records))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())


def checksum(records: Mapping[str, np.ndarray]) -> str:
    """SHA-256 of the serialized records; equal iff the bytes are identical."""
    return hashlib.sha256(dumps(records)).hexdigest()
