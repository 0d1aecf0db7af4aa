"""Named, reproducible random streams derived from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, name, *extra)``.

    The name is hashed with CRC32 so streams are stable across processes
    (``hash()`` is salted per interpreter).
    """
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    key.extend(int(e) & 0xFFFFFFFF for e in extra)
    return np.random.default_rng(np.random.SeedSequence(key))
