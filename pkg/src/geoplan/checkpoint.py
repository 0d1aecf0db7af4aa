"""Flat little-endian float64 checkpoints with a JSON sidecar describing the layout."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError

_DTYPE = np.dtype("<f8")


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], seed: int, meta: dict | None = None) -> None:
    """Write ``arrays`` back to back in insertion order; shapes go to ``<path>.json``."""
    path = Path(path)
    tensors, offset, chunks = [], 0, []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype=_DTYPE)
        tensors.append({"name": name, "shape": list(a.shape), "offset": offset, "count": int(a.size)})
        offset += a.size
        chunks.append(a.ravel())
    blob = np.concatenate(chunks) if chunks else np.zeros(0, dtype=_DTYPE)
    path.write_bytes(blob.astype(_DTYPE).tobytes())
    side = {"format": "float64-le", "seed": int(seed), "tensors": tensors, "meta": meta or {}}
    sidecar_path(path).write_text(json.dumps(side, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    side_file = sidecar_path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    if not side_file.exists():
        raise FileNotFoundError(f"checkpoint sidecar not found: {side_file}")
    side = json.loads(side_file.read_text())
    blob = np.frombuffer(path.read_bytes(), dtype=_DTYPE)
    arrays = {}
    for t in side["tensors"]:
        start, count = int(t["offset"]), int(t["count"])
        if start + count > blob.size:
            raise DataError(f"{path}: tensor {t['name']!r} runs past the end of the data")
        arrays[t["name"]] = blob[start : start + count].astype(np.float64).reshape(t["shape"])
    return arrays, side
