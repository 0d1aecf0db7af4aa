"""Raster canvas to topological road graph.

Pipeline: patch encoding -> prototype similarity -> per-tile threshold ->
thinning -> junction/edge tracing with per-edge curvature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DegenerateInputError, DimensionError, NodeLookupError, PreconditionError
from .rng import stream

_NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass
class RasterTile:
    """Row-major raster of shape (height, width, channels) with world placement.

    Pixel (row, col) sits at world ``origin + (col, row) * resolution``.
    """

    data: np.ndarray
    origin: tuple[float, float] = (0.0, 0.0)
    resolution: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise DimensionError(f"raster data must be 2-D or 3-D, got shape {data.shape}")
        if not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("raster intensities must lie in [0, 1]")
        self.data = data
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        self.resolution = float(self.resolution)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class FeatureMap:
    data: np.ndarray  # (grid_height, grid_width, dim)

    @property
    def grid_height(self) -> int:
        return self.data.shape[0]

    @property
    def grid_width(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]


@dataclass
class PrototypeSet:
    prototypes: np.ndarray  # (k, dim), unit rows
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.prototypes, dtype=np.float64))
        if p.shape[0] < 1:
            raise ValueError("prototype set is empty")
        norms = np.linalg.norm(p, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("prototypes must have unit L2 norm")
        self.prototypes = p
        if not self.labels:
            self.labels = [f"proto-{i}" for i in range(len(p))]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    def to_json(self) -> dict:
        return {"labels": list(self.labels), "prototypes": self.prototypes.tolist()}

    @classmethod
    def from_json(cls, payload: dict) -> "PrototypeSet":
        return cls(np.asarray(payload["prototypes"], dtype=np.float64), list(payload["labels"]))


@dataclass
class PathMask:
    bits: np.ndarray  # (grid_height, grid_width) uint8 in {0, 1}

    def __post_init__(self):
        self.bits = (np.asarray(self.bits) != 0).astype(np.uint8)

    @property
    def grid_height(self) -> int:
        return self.bits.shape[0]

    @property
    def grid_width(self) -> int:
        return self.bits.shape[1]


@dataclass
class Node:
    id: int
    x: float
    y: float


@dataclass
class Edge:
    id: int
    a: int
    b: int
    polyline: np.ndarray  # (n, 2) world metres
    length: float
    curvature: float


@dataclass
class TopoGraph:
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)

    def node(self, node_id: int) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise NodeLookupError(node_id)

    def degrees(self) -> dict[int, int]:
        deg = {n.id: 0 for n in self.nodes}
        for e in self.edges:
            deg[e.a] += 1
            deg[e.b] += 1
        return deg

    def component_count(self) -> int:
        parent = {n.id: n.id for n in self.nodes}

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for e in self.edges:
            ra, rb = find(e.a), find(e.b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        return len({find(i) for i in parent})

    def to_json(self) -> dict:
        return {
            "nodes": [{"id": n.id, "x": round(n.x, 6), "y": round(n.y, 6)} for n in self.nodes],
            "edges": [
                {
                    "id": e.id,
                    "a": e.a,
                    "b": e.b,
                    "polyline": [[round(float(x), 6), round(float(y), 6)] for x, y in e.polyline],
                    "length": round(e.length, 6),
                    "curvature": round(e.curvature, 6),
                }
                for e in self.edges
            ],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "TopoGraph":
        nodes = [Node(int(n["id"]), float(n["x"]), float(n["y"])) for n in payload["nodes"]]
        edges = [
            Edge(
                int(e["id"]),
                int(e["a"]),
                int(e["b"]),
                np.asarray(e["polyline"], dtype=np.float64).reshape(-1, 2),
                float(e["length"]),
                float(e["curvature"]),
            )
            for e in payload["edges"]
        ]
        return cls(nodes, edges)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TopoGraph":
        return cls.from_json(json.loads(Path(path).read_text()))


# --------------------------------------------------------------- encoding


def projection_matrix(patch_len: int, dim: int, seed: int) -> np.ndarray:
    rng = stream(seed, "patch-encoder", patch_len, dim)
    return rng.standard_normal((dim, patch_len)) / math.sqrt(patch_len)


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    # all-zero patches stay zero rather than becoming NaN
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def encode_tile(tile: RasterTile, patch_size: int, dim: int, seed: int) -> FeatureMap:
    """Frozen random-projection patch encoder; one unit vector per patch."""
    p = int(patch_size)
    if p <= 0 or tile.width % p or tile.height % p:
        raise DimensionError(
            f"patch size {patch_size} does not divide tile {tile.width}x{tile.height}"
        )
    gh, gw, ch = tile.height // p, tile.width // p, tile.channels
    patches = tile.data.reshape(gh, p, gw, p, ch).transpose(0, 2, 1, 3, 4).reshape(gh, gw, -1)
    proj = projection_matrix(p * p * ch, dim, seed)
    # centre intensities so that colour direction, not brightness, drives cosine
    return FeatureMap(_normalize_rows((patches - 0.5) @ proj.T))


def similarity_map(fm: FeatureMap, protos: PrototypeSet) -> np.ndarray:
    """Max cosine similarity of every token against the prototype set."""
    if fm.dim != protos.dim:
        raise DimensionError(f"feature dim {fm.dim} != prototype dim {protos.dim}")
    tokens = _normalize_rows(fm.data)
    sim = (tokens @ protos.prototypes.T).max(axis=-1)
    return np.clip(sim, -1.0, 1.0)


def adaptive_threshold(sim: np.ndarray, bins: int = 256) -> PathMask:
    """Per-tile two-class (Otsu) threshold over a fixed-bin histogram."""
    sim = np.asarray(sim, dtype=np.float64)
    if sim.size == 0:
        raise ValueError("empty similarity grid")
    lo, hi = float(sim.min()), float(sim.max())
    if hi <= lo:
        return PathMask(np.zeros(sim.shape, dtype=np.uint8))
    idx = np.minimum(((sim - lo) / (hi - lo) * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx.ravel(), minlength=bins).astype(np.float64)
    centers = lo + (np.arange(bins) + 0.5) * (hi - lo) / bins
    w0 = np.cumsum(counts)
    s0 = np.cumsum(counts * centers)
    total, total_s = w0[-1], s0[-1]
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    mu0 = np.divide(s0, w0, out=np.zeros(bins), where=w0 > 0)
    mu1 = np.divide(total_s - s0, w1, out=np.zeros(bins), where=w1 > 0)
    between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -1.0)
    t = int(np.argmax(between))
    return PathMask((idx > t).astype(np.uint8))


def skeletonize(mask: PathMask) -> PathMask:
    """Two-subiteration thinning followed by removal of redundant simple pixels."""
    return PathMask(_kernels.thin(mask.bits))


# ---------------------------------------------------------------- tracing


def has_square_block(bits: np.ndarray) -> bool:
    b = np.asarray(bits) != 0
    return bool((b[:-1, :-1] & b[1:, :-1] & b[:-1, 1:] & b[1:, 1:]).any())


def _douglas_peucker(points: np.ndarray, tol: float) -> np.ndarray:
    if len(points) <= 2:
        return points
    keep = np.zeros(len(points), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(points) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        a, b = points[i], points[j]
        seg = b - a
        seg_len = math.hypot(seg[0], seg[1])
        mid = points[i + 1 : j]
        if seg_len == 0.0:
            d = np.hypot(mid[:, 0] - a[0], mid[:, 1] - a[1])
        else:
            d = np.abs(seg[0] * (mid[:, 1] - a[1]) - seg[1] * (mid[:, 0] - a[0])) / seg_len
        k = int(np.argmax(d))
        if d[k] > tol:
            keep[i + 1 + k] = True
            stack.append((i, i + 1 + k))
            stack.append((i + 1 + k, j))
    return points[keep]


def polyline_length(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    d = np.diff(pts, axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def estimate_curvature(polyline) -> float:
    """Sum of absolute turning angles at interior vertices per metre of length."""
    pts = np.asarray(polyline, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise DegenerateInputError("curvature needs at least two points")
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    total = float(seg_len.sum())
    if not total > 0.0:
        raise DegenerateInputError("polyline has zero length")
    seg = seg[seg_len > 0.0]
    if len(seg) < 2:
        return 0.0
    a, b = seg[:-1], seg[1:]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]
    return float(np.abs(np.arctan2(cross, dot)).sum() / total)


def extract_graph(skeleton: PathMask, tile: RasterTile) -> TopoGraph:
    """Trace a width-1 skeleton into junction/endpoint nodes and chain edges.

    Adjacent junction pixels (three or more neighbours) merge into one node
    placed at the member pixel nearest their centroid. Loops without any
    node pixel are anchored at their lowest row-major pixel.
    """
    bits = skeleton.bits
    if has_square_block(bits):
        raise PreconditionError("skeleton contains a 2x2 block; run skeletonize first")
    gh, gw = bits.shape
    scale_x = tile.width / gw
    scale_y = tile.height / gh
    res = tile.resolution
    ox, oy = tile.origin

    def world(pix: int) -> tuple[float, float]:
        r, c = divmod(pix, gw)
        return (
            ox + ((c + 0.5) * scale_x - 0.5) * res,
            oy + ((r + 0.5) * scale_y - 0.5) * res,
        )

    fg = [int(i) for i in np.flatnonzero(bits.ravel())]
    fg_set = set(fg)

    def neighbours(pix: int) -> list[int]:
        r, c = divmod(pix, gw)
        out = []
        for dr, dc in _NEIGHBOURS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < gh and 0 <= cc < gw and rr * gw + cc in fg_set:
                out.append(rr * gw + cc)
        return out

    nbrs = {p: neighbours(p) for p in fg}

    # group node pixels: junction clusters, endpoints, isolated pixels
    owner: dict[int, int] = {}
    groups: list[list[int]] = []
    for p in fg:
        if p in owner:
            continue
        deg = len(nbrs[p])
        if deg == 2:
            continue
        if deg >= 3:
            members, queue = [], [p]
            owner[p] = len(groups)
            while queue:
                q = queue.pop()
                members.append(q)
                for n in nbrs[q]:
                    if n not in owner and len(nbrs[n]) >= 3:
                        owner[n] = len(groups)
                        queue.append(n)
            groups.append(sorted(members))
        else:
            owner[p] = len(groups)
            groups.append([p])

    def representative(members: list[int]) -> int:
        if len(members) == 1:
            return members[0]
        pts = np.array([divmod(m, gw) for m in members], dtype=np.float64)
        centroid = pts.mean(axis=0)
        d = ((pts - centroid) ** 2).sum(axis=1)
        return members[int(np.argmin(d))]

    reps = [representative(m) for m in groups]
    used_steps: set[tuple[int, int]] = set()
    chain_pixels: set[int] = set()
    raw_edges: list[tuple[int, int, list[int]]] = []

    def trace(start_group: int, q: int, n: int) -> None:
        chain: list[int] = []
        prev, cur = q, n
        while cur not in owner:
            chain.append(cur)
            nxt = [m for m in nbrs[cur] if m != prev]
            if len(nxt) != 1:
                break
            prev, cur = cur, nxt[0]
        end_group = owner.get(cur)
        if end_group is None:
            return
        used_steps.add((cur, prev))
        if end_group == start_group and len(chain) <= 1:
            return  # pixel touching one cluster twice, not a road
        chain_pixels.update(chain)
        pixels = [q] + chain + [cur]
        raw_edges.append((start_group, end_group, pixels))

    for gi, members in enumerate(groups):
        for q in members:
            for n in nbrs[q]:
                if owner.get(n) == gi or (q, n) in used_steps:
                    continue
                used_steps.add((q, n))
                trace(gi, q, n)

    # isolated loops: every pixel has degree 2 and none was reached
    for p in fg:
        if p in owner or p in chain_pixels:
            continue
        gi = len(groups)
        owner[p] = gi
        groups.append([p])
        reps.append(p)
        first = nbrs[p][0]
        used_steps.add((p, first))
        trace(gi, p, first)

    nodes = []
    for gi, rep in enumerate(reps):
        x, y = world(rep)
        nodes.append(Node(gi, x, y))

    tol = res * max(scale_x, scale_y)
    edges = []
    for a, b, pixels in raw_edges:
        inner = pixels[1:-1]
        if pixels[0] != reps[a]:
            inner = [pixels[0]] + inner
        if pixels[-1] != reps[b]:
            inner = inner + [pixels[-1]]
        pts = [(nodes[a].x, nodes[a].y)] + [world(p) for p in inner] + [(nodes[b].x, nodes[b].y)]
        poly = np.array(pts, dtype=np.float64)
        length = polyline_length(poly)
        if length <= 0.0:
            continue
        curvature = estimate_curvature(_douglas_peucker(poly, tol))
        edges.append(Edge(len(edges), a, b, poly, length, curvature))
    return TopoGraph(nodes, edges)


def extract_canvas(
    tile: RasterTile, protos: PrototypeSet, patch_size: int, seed: int
) -> tuple[PathMask, PathMask, TopoGraph]:
    """Full canvas pipeline: returns (path mask, skeleton, graph)."""
    fm = encode_tile(tile, patch_size, protos.dim, seed)
    mask = adaptive_threshold(similarity_map(fm, protos))
    skel = skeletonize(mask)
    return mask, skel, extract_graph(skel, tile)
