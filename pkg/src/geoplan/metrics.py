"""Retrieval and navigation metrics: recall@k, AP, hit rate, TS, SR, VCS."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DataError, DegenerateInputError, DimensionError, ParameterError


@dataclass
class RankedResult:
    query_id: int
    ranked_ids: list[int]
    truth: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if isinstance(self.truth, (int, np.integer)):
            self.truth = frozenset([int(self.truth)])
        else:
            self.truth = frozenset(int(t) for t in self.truth)
        if len(set(self.ranked_ids)) != len(self.ranked_ids):
            raise DataError(f"query {self.query_id}: ranked ids are not distinct")


def topk_recall(results: list[RankedResult], k: int) -> float:
    """Fraction of queries with a true match among the first k candidates."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not results:
        raise ParameterError("no retrieval results")
    hits = sum(1 for r in results if r.truth.intersection(r.ranked_ids[:k]))
    return hits / len(results)


def top_percent_k(candidate_count: int, percent: float = 1.0) -> int:
    return max(1, math.ceil(percent / 100.0 * candidate_count))


def query_ap(result: RankedResult) -> float | None:
    """Step-interpolated AP: sum over relevant ranks of precision times recall increment."""
    n_rel = len(result.truth)
    if n_rel == 0:
        return None
    ap, found = 0.0, 0
    for rank, cid in enumerate(result.ranked_ids, start=1):
        if cid in result.truth:
            found += 1
            ap += (found / rank) / n_rel
    return ap


@dataclass
class APSummary:
    mean: float
    per_query: list[float]
    excluded: int


def average_precision_summary(results: list[RankedResult]) -> APSummary:
    aps = [query_ap(r) for r in results]
    kept = [a for a in aps if a is not None]
    mean = float(np.mean(kept)) if kept else 0.0
    return APSummary(mean, kept, len(aps) - len(kept))


def average_precision(results: list[RankedResult]) -> float:
    """Mean AP over queries that have at least one relevant item."""
    return average_precision_summary(results).mean


# ---------------------------------------------------------------- footprints


def footprint_overlap(query, tile) -> float:
    """Intersection area over query area for (xmin, ymin, xmax, ymax) rectangles."""
    qx0, qy0, qx1, qy1 = (float(v) for v in query)
    tx0, ty0, tx1, ty1 = (float(v) for v in tile)
    area = (qx1 - qx0) * (qy1 - qy0)
    if area <= 0:
        raise DegenerateInputError("query footprint has no area")
    w = max(0.0, min(qx1, tx1) - max(qx0, tx0))
    h = max(0.0, min(qy1, ty1) - max(qy0, ty0))
    return w * h / area


def hit_rate(results: list[RankedResult], overlaps, threshold: float = 0.5) -> float:
    """Fraction of queries whose top-1 footprint overlap reaches ``threshold``."""
    if len(overlaps) != len(results):
        raise DataError(f"{len(results)} queries but {len(overlaps)} overlap scores")
    if not results:
        raise ParameterError("no retrieval results")
    scores = []
    for r, s in zip(results, overlaps):
        if s is None or not math.isfinite(float(s)):
            raise DataError(f"missing overlap score for query {r.query_id}")
        scores.append(float(s))
    return float(np.mean(np.array(scores) >= threshold))


# ---------------------------------------------------------------- trajectories


def densify(points: np.ndarray, interval: float) -> np.ndarray:
    """Insert evenly spaced points so no gap along the polyline exceeds ``interval``."""
    if not interval > 0:
        raise ParameterError(f"densification interval must be positive, got {interval}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        return pts
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil(math.hypot(*(b - a)) / interval - 1e-12)))
        t = np.arange(1, n + 1)[:, None] / n
        out.append(a + t * (b - a))
    return np.vstack(out)


def trajectory_similarity(generated, reference, densify: float | None = None) -> float:
    """Symmetric Hausdorff distance between the two point sets (metres)."""
    a = np.asarray(generated, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(reference, dtype=np.float64).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        raise ParameterError("trajectories must be non-empty")
    if densify is not None:
        a, b = _densify(a, densify), _densify(b, densify)
    return max(_kernels.directed_hausdorff(a, b), _kernels.directed_hausdorff(b, a))


_densify = densify


@dataclass
class RoadMask:
    """Traversable cells on a regular grid anchored at ``origin`` (metres)."""

    grid: np.ndarray  # (rows, cols) bool
    cell_meters: float
    origin: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def from_world(cls, world) -> "RoadMask":
        return cls(world.open_grid(), world.cell_meters)

    def on_road(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        c = np.floor((pts[:, 0] - self.origin[0]) / self.cell_meters).astype(np.int64)
        r = np.floor((pts[:, 1] - self.origin[1]) / self.cell_meters).astype(np.int64)
        rows, cols = self.grid.shape
        inside = (r >= 0) & (r < rows) & (c >= 0) & (c < cols)
        out = np.zeros(len(pts), dtype=bool)
        out[inside] = self.grid[r[inside], c[inside]]
        return out

    def translated(self, dx: float, dy: float) -> "RoadMask":
        return RoadMask(self.grid, self.cell_meters, (self.origin[0] + dx, self.origin[1] + dy))


def success(points, goal, road: RoadMask, radius: float = 5.0) -> bool:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return False
    g = np.asarray(goal, dtype=np.float64)
    return bool(math.hypot(*(pts[-1] - g)) <= radius and road.on_road(pts).all())


@dataclass
class TrajectoryPair:
    generated: np.ndarray
    reference: np.ndarray
    goal: tuple[float, float]


def success_rate(pairs: list[TrajectoryPair], road: RoadMask, radius: float = 5.0) -> float:
    if not pairs:
        raise ParameterError("no trajectories")
    return float(np.mean([success(p.generated, p.goal, road, radius) for p in pairs]))


def sample_indices(length: int, m: int) -> np.ndarray:
    """``min(m, length)`` evenly spaced indices covering both ends."""
    k = min(m, length)
    return np.round(np.linspace(0, length - 1, k)).astype(np.int64)


def visual_consistency(ground: np.ndarray, satellite: np.ndarray, m: int = 16) -> float:
    """Mean cosine between paired (L, D) ground and satellite embeddings at sampled waypoints."""
    g = np.asarray(ground, dtype=np.float64)
    s = np.asarray(satellite, dtype=np.float64)
    if g.shape != s.shape or g.ndim != 2:
        raise DimensionError(f"embedding sequences differ: {g.shape} vs {s.shape}")
    if len(g) == 0:
        raise ParameterError("need at least one waypoint")
    idx = sample_indices(len(g), m)
    g, s = g[idx], s[idx]
    ng, ns = np.linalg.norm(g, axis=1), np.linalg.norm(s, axis=1)
    if np.any(ng == 0) or np.any(ns == 0):
        raise DegenerateInputError("zero embedding along the trajectory")
    return float(np.mean(np.sum(g * s, axis=1) / (ng * ns)))
