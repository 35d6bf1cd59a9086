import os
import tempfile
import zlib
from pathlib import Path

import numpy as np

STREAMS = ("data", "generator", "init", "mix-weights", "shift")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named purpose, derived from a run seed.

    Ablations that share a seed draw identical numbers from every stream they
    both use.
    """
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def thread_cap(default: int = 1) -> int:
    """Parallelism limit from ``L2D_THREADS``."""
    raw = os.environ.get("L2D_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return default
