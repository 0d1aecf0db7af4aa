"""Binary PGM/PPM (P5/P6) rasters with a ``.hdr`` placement sidecar.

The sidecar is one text line ``origin_x origin_y resolution`` in metres;
blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .canvas import RasterTile
from .errors import RasterFormatError


def header_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".hdr")


def _tokens(data: bytes, count: int, path: Path):
    """First ``count`` whitespace-separated header tokens plus the offset after them."""
    out, i, line = [], 0, 1
    n = len(data)
    while len(out) < count:
        while i < n and data[i : i + 1].isspace():
            line += data[i : i + 1] == b"\n"
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
            continue
        if i >= n:
            raise RasterFormatError(f"{path}: line {line}: header ends early ({len(out)} of {count} fields)")
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        out.append((data[i:j].decode("ascii", "replace"), line))
        i = j
    # exactly one whitespace byte separates the header from the samples
    return out, i + 1


def read_pnm(path: str | Path) -> np.ndarray:
    """Samples scaled to [0, 1], shape (H, W) for P5 or (H, W, 3) for P6."""
    path = Path(path)
    data = path.read_bytes()
    toks, offset = _tokens(data, 4, path)
    magic, magic_line = toks[0]
    if magic not in ("P5", "P6"):
        raise RasterFormatError(f"{path}: line {magic_line}: unsupported magic {magic!r} (want P5 or P6)")
    vals = []
    for (tok, line), name in zip(toks[1:], ("width", "height", "maxval")):
        try:
            v = int(tok)
        except ValueError:
            raise RasterFormatError(f"{path}: line {line}: {name} {tok!r} is not an integer") from None
        if v <= 0:
            raise RasterFormatError(f"{path}: line {line}: {name} must be positive, got {v}")
        vals.append(v)
    w, h, maxval = vals
    if maxval > 65535:
        raise RasterFormatError(f"{path}: line {toks[3][1]}: maxval {maxval} exceeds 65535")
    ch = 1 if magic == "P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * ch * dtype.itemsize
    body = data[offset : offset + need]
    if len(body) < need:
        raise RasterFormatError(f"{path}: pixel data truncated ({len(body)} of {need} bytes)")
    arr = np.frombuffer(body, dtype=dtype).astype(np.float64) / maxval
    arr = np.clip(arr, 0.0, 1.0)
    return arr.reshape(h, w) if ch == 1 else arr.reshape(h, w, 3)


def write_pnm(path: str | Path, image: np.ndarray, maxval: int = 255) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise RasterFormatError(f"cannot store an image of shape {img.shape} as PGM/PPM")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    q = np.round(np.clip(img, 0.0, 1.0) * maxval).astype(dtype)
    h, w = img.shape[:2]
    Path(path).write_bytes(magic + f"\n{w} {h}\n{maxval}\n".encode() + q.tobytes())


def read_header(path: str | Path) -> tuple[tuple[float, float], float]:
    path = Path(path)
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise RasterFormatError(
                f"{path}: line {lineno}: expected 'origin_x origin_y resolution', got {len(parts)} fields"
            )
        try:
            ox, oy, res = (float(p) for p in parts)
        except ValueError:
            raise RasterFormatError(f"{path}: line {lineno}: non-numeric field in {line!r}") from None
        if not res > 0:
            raise RasterFormatError(f"{path}: line {lineno}: resolution must be positive, got {res}")
        return (ox, oy), res
    raise RasterFormatError(f"{path}: line 1: header is empty")


def write_header(path: str | Path, origin: tuple[float, float], resolution: float) -> None:
    Path(path).write_text(f"{origin[0]!r} {origin[1]!r} {resolution!r}\n")


def load_raster(path: str | Path) -> RasterTile:
    """Raster plus its sidecar; a missing sidecar means origin (0, 0) and 1 m pixels."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"raster not found: {path}")
    data = read_pnm(path)
    hdr = header_path(path)
    origin, res = read_header(hdr) if hdr.exists() else ((0.0, 0.0), 1.0)
    return RasterTile(data, origin, res)


def save_raster(path: str | Path, tile: RasterTile, maxval: int = 255) -> None:
    write_pnm(path, tile.data, maxval)
    write_header(header_path(path), tile.origin, tile.resolution)
