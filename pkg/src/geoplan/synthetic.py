"""Procedural road rasters, road prototypes and paired cross-view data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .canvas import PrototypeSet, RasterTile, encode_tile
from .rng import stream

ROAD_RGB = np.array([0.78, 0.78, 0.80])
GROUND_RGB = np.array([0.10, 0.35, 0.05])

# expected (nodes, edges, components) per template
TEMPLATE_TOPOLOGY = {
    "straight": (2, 1, 1),
    "corner": (2, 1, 1),
    "tee": (4, 3, 1),
    "cross": (5, 4, 1),
    "parallel": (4, 2, 2),
}


@dataclass
class RoadScene:
    kind: str
    tile: RasterTile
    road: np.ndarray  # (H, W) bool ground-truth road pixels

    @property
    def topology(self) -> tuple[int, int, int]:
        return TEMPLATE_TOPOLOGY[self.kind]


def _paint(road: np.ndarray, rng: np.random.Generator, noise: float) -> np.ndarray:
    h, w = road.shape
    # vegetation: strong per-pixel texture, mostly green
    ground = GROUND_RGB * rng.uniform(0.2, 1.6, size=(h, w, 1))
    ground = ground + rng.uniform(-0.15, 0.15, size=(h, w, 3))
    pavement = ROAD_RGB + rng.uniform(-noise, noise, size=(h, w, 3))
    return np.clip(np.where(road[:, :, None], pavement, ground), 0.0, 1.0)


def _hbar(road, row, c0, c1, half):
    road[max(row - half, 0) : row + half, max(c0, 0) : c1] = True


def _vbar(road, col, r0, r1, half):
    road[max(r0, 0) : r1, max(col - half, 0) : col + half] = True


def road_mask(kind: str, size: int, rng: np.random.Generator, width: int) -> np.ndarray:
    """Axis-aligned road layout of the given template kind on a size x size canvas."""
    road = np.zeros((size, size), dtype=bool)
    half = width // 2
    margin = size // 8
    lo, hi = 3 * margin, size - 3 * margin

    def pos():
        return int(rng.integers(lo, hi + 1))

    flip_h, flip_v, transpose = (bool(b) for b in rng.integers(0, 2, size=3))
    if kind == "straight":
        _hbar(road, pos(), margin, size - margin, half)
    elif kind == "corner":
        r, c = pos(), pos()
        _hbar(road, r, margin, c + half, half)
        _vbar(road, c, r - half, size - margin, half)
    elif kind == "tee":
        r, c = pos(), pos()
        _hbar(road, r, margin, size - margin, half)
        _vbar(road, c, r - half, size - margin, half)
    elif kind == "cross":
        r, c = pos(), pos()
        _hbar(road, r, margin, size - margin, half)
        _vbar(road, c, margin, size - margin, half)
    elif kind == "parallel":
        gap = size // 3
        r = int(rng.integers(margin + half + 1, size - margin - gap - half))
        _hbar(road, r, margin, size - margin, half)
        _hbar(road, r + gap, margin, size - margin, half)
    else:
        raise ValueError(f"unknown road template {kind!r}")
    if transpose:
        road = road.T
    if flip_h:
        road = road[:, ::-1]
    if flip_v:
        road = road[::-1, :]
    return np.ascontiguousarray(road)


def render_road_scene(
    kind: str,
    seed: int,
    size: int = 128,
    width: int | None = None,
    noise: float = 0.05,
    resolution: float = 0.5,
) -> RoadScene:
    rng = stream(seed, "road-scene", size)
    if width is None:
        width = int(rng.integers(10, 17))
    road = road_mask(kind, size, rng, width)
    return RoadScene(kind, RasterTile(_paint(road, rng, noise), (0.0, 0.0), resolution), road)


def road_prototypes(
    patch_size: int,
    dim: int,
    seed: int,
    support: int = 4,
    kinds: tuple[str, ...] = ("straight", "corner", "tee"),
) -> PrototypeSet:
    """Average encoded road tokens over a small rendered support set per template."""
    labels = {"straight": "straight-segment", "corner": "corner", "tee": "junction", "cross": "junction"}
    protos, names = [], []
    size = patch_size * 16
    for kind in kinds:
        acc = []
        for i in range(support):
            rng = stream(seed, "prototype-support", i, len(kind))
            road = road_mask(kind, size, rng, width=4 * patch_size)
            tile = RasterTile(_paint(road, rng, 0.05))
            fm = encode_tile(tile, patch_size, dim, seed)
            cover = road.reshape(16, patch_size, 16, patch_size).mean(axis=(1, 3))
            acc.append(fm.data[cover == 1.0])
        mean = np.concatenate(acc).mean(axis=0)
        protos.append(mean / np.linalg.norm(mean))
        names.append(labels.get(kind, kind))
    return PrototypeSet(np.array(protos), names)


@dataclass
class PairedViews:
    ground: np.ndarray  # (N, tokens, token_len)
    satellite: np.ndarray  # (N, tokens, token_len)
    latent: np.ndarray  # (N, latent_dim)


def paired_views(
    count: int,
    seed: int,
    tokens: int = 4,
    token_len: int = 8,
    latent_dim: int = 16,
    noise: float = 0.1,
) -> PairedViews:
    """Ground/satellite token blocks sharing a latent, each with its own mixing and noise."""
    rng = stream(seed, "paired-views")
    latent = rng.standard_normal((count, latent_dim))
    mix_g = rng.standard_normal((tokens * token_len, latent_dim)) / np.sqrt(latent_dim)
    mix_s = rng.standard_normal((tokens * token_len, latent_dim)) / np.sqrt(latent_dim)
    ground = latent @ mix_g.T + noise * rng.standard_normal((count, tokens * token_len))
    sat = latent @ mix_s.T + noise * rng.standard_normal((count, tokens * token_len))
    return PairedViews(
        ground.reshape(count, tokens, token_len), sat.reshape(count, tokens, token_len), latent
    )
