"""Named-array container files.

Layout (all integers little-endian)::

    b"L2DCKPT1"                 magic, the trailing digit is the format version
    u32 count
    count x {
        u32 name_len, name (utf-8)
        u32 ndim, ndim x u64 dims
        prod(dims) x f64 values
    }
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .utils import atomic_write_bytes

MAGIC = b"L2DCKPT1"


class CheckpointError(ValueError):
    pass


def dumps(arrays: dict) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(arrays))]
    for name, value in arrays.items():
        data = np.array(value, dtype="<f8", order="C")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        parts.append(data.tobytes())
    return b"".join(parts)


def loads(payload: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    view = memoryview(payload)
    pos = 0

    def take(n: int, what: str):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"{source}: truncated while reading {what} at byte {pos}")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(len(MAGIC), "magic")) != MAGIC:
        raise CheckpointError(f"{source}: bad magic, not an L2DCKPT1 container")
    (count,) = struct.unpack("<I", take(4, "array count"))
    arrays = {}
    for index in range(count):
        (name_len,) = struct.unpack("<I", take(4, f"name length of array {index}"))
        name = bytes(take(name_len, f"name of array {index}")).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4, f"rank of {name!r}"))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim, f"shape of {name!r}"))
        n = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(take(8 * n, f"values of {name!r}"), dtype="<f8")
        arrays[name] = values.reshape(shape).astype(np.float64)
    if pos != len(view):
        raise CheckpointError(f"{source}: {len(view) - pos} trailing bytes after {count} arrays")
    return arrays


def save(path, arrays: dict) -> None:
    atomic_write_bytes(path, dumps(arrays))


def load(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc.strerror})") from exc
    return loads(payload, str(path))
