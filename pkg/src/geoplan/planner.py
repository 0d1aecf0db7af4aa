"""Curvature-weighted A* over a road graph, waypoint downsampling and canvas crops."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .canvas import RasterTile, TopoGraph
from .errors import NodeLookupError, NoPathError, ParameterError


@dataclass
class PlanQuery:
    start: int
    goal: int
    alpha: float = 1.0
    beta: float = 0.5
    disabled: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ParameterError(f"alpha and beta must be >= 0 (got {self.alpha}, {self.beta})")
        self.disabled = frozenset(int(e) for e in self.disabled)


@dataclass
class WaypointPath:
    nodes: list[int]
    edges: list[int]
    cost: float
    waypoints: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    expanded: int = 0

    def to_json(self) -> dict:
        return {
            "nodes": [int(n) for n in self.nodes],
            "edges": [int(e) for e in self.edges],
            "waypoints": [[round(float(x), 6), round(float(y), 6)] for x, y in self.waypoints],
            "cost": round(float(self.cost), 6),
        }


class GraphIndex:
    """Array view of a TopoGraph for repeated queries.

    Nodes are indexed in ascending id order so that heap ties on the index
    are ties on the node id.
    """

    def __init__(self, graph: TopoGraph):
        self.graph = graph
        ids = sorted(n.id for n in graph.nodes)
        self.ids = np.array(ids, dtype=np.int64)
        self.slot = {nid: i for i, nid in enumerate(ids)}
        pos = {n.id: (n.x, n.y) for n in graph.nodes}
        self.xy = np.array([pos[i] for i in ids], dtype=np.float64).reshape(-1, 2)
        self.edge_ids = np.array([e.id for e in graph.edges], dtype=np.int64)
        self.ea = np.array([self.slot[e.a] for e in graph.edges], dtype=np.int64)
        self.eb = np.array([self.slot[e.b] for e in graph.edges], dtype=np.int64)
        self.kappa = np.array([e.curvature for e in graph.edges], dtype=np.float64)
        self.chord = np.hypot(*(self.xy[self.ea] - self.xy[self.eb]).T) if len(self.ea) else np.zeros(0)
        self.edge_of = {e.id: e for e in graph.edges}

    def index(self, node_id: int) -> int:
        try:
            return self.slot[int(node_id)]
        except KeyError:
            raise NodeLookupError(f"unknown node id {node_id}") from None

    def edge_costs(self, alpha: float, beta: float) -> np.ndarray:
        return alpha * self.chord + beta * self.kappa

    def csr(self, alpha: float, beta: float, disabled=frozenset()):
        """Directed CSR arrays (both orientations of every enabled edge)."""
        keep = np.array([int(e) not in disabled for e in self.edge_ids], dtype=bool)
        cost = self.edge_costs(alpha, beta)[keep]
        src = np.concatenate([self.ea[keep], self.eb[keep]])
        dst = np.concatenate([self.eb[keep], self.ea[keep]])
        eid = np.concatenate([self.edge_ids[keep], self.edge_ids[keep]])
        cst = np.concatenate([cost, cost])
        order = np.lexsort((eid, dst, src))
        indptr = np.zeros(len(self.ids) + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        return np.cumsum(indptr), dst[order], cst[order], eid[order]


def astar(graph: TopoGraph | GraphIndex, q: PlanQuery) -> WaypointPath:
    """Minimum-cost node path with edge cost alpha*|v_i - v_j| + beta*kappa."""
    gi = graph if isinstance(graph, GraphIndex) else GraphIndex(graph)
    s, g = gi.index(q.start), gi.index(q.goal)
    if s == g:
        return WaypointPath([int(q.start)], [], 0.0, expanded=1)
    indptr, indices, cost, eid = gi.csr(q.alpha, q.beta, q.disabled)
    dist, prev, prev_edge, expanded = _kernels.astar_csr(indptr, indices, cost, gi.xy, s, g, q.alpha)
    if not np.isfinite(dist[g]):
        raise NoPathError(f"node {q.goal} is unreachable from node {q.start}")
    nodes, edges = [g], []
    while nodes[-1] != s:
        edges.append(int(eid[prev_edge[nodes[-1]]]))
        nodes.append(int(prev[nodes[-1]]))
    nodes.reverse()
    edges.reverse()
    return WaypointPath([int(gi.ids[i]) for i in nodes], edges, float(dist[g]), expanded=int(expanded))


def path_polyline(path: WaypointPath, graph: TopoGraph | GraphIndex) -> np.ndarray:
    """Concatenate the traversed edge polylines, each oriented along the path."""
    gi = graph if isinstance(graph, GraphIndex) else GraphIndex(graph)
    first = gi.graph.node(path.nodes[0])
    pts = [np.array([[first.x, first.y]])]
    for a, eid in zip(path.nodes[:-1], path.edges):
        e = gi.edge_of[eid]
        poly = np.asarray(e.polyline, dtype=np.float64)
        if e.a != a:
            poly = poly[::-1]
        pts.append(poly[1:])
    return np.concatenate(pts)


def resample(poly: np.ndarray, interval: float) -> np.ndarray:
    """Points every ``interval`` of arc length plus the final endpoint."""
    if not interval > 0:
        raise ParameterError(f"interval must be positive, got {interval}")
    poly = np.asarray(poly, dtype=np.float64).reshape(-1, 2)
    seg = np.hypot(*np.diff(poly, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return poly[:1].copy()
    count = int(math.floor(total / interval + 1e-9))
    s = np.arange(count + 1) * interval
    s = s[s <= total]
    # drop a sample that would sit on top of the endpoint
    if total - s[-1] <= 1e-9 * max(1.0, total):
        s = s[:-1]
    j = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    t = np.divide(s - cum[j], seg[j], out=np.zeros_like(s), where=seg[j] > 0)
    pts = poly[j] + t[:, None] * (poly[j + 1] - poly[j])
    return np.vstack([pts, poly[-1:]])


def downsample(path: WaypointPath, graph: TopoGraph | GraphIndex, interval: float = 7.5) -> np.ndarray:
    if not interval > 0:
        raise ParameterError(f"interval must be positive, got {interval}")
    return resample(path_polyline(path, graph), interval)


def plan(graph: TopoGraph | GraphIndex, q: PlanQuery, interval: float = 7.5) -> WaypointPath:
    path = astar(graph, q)
    path.waypoints = downsample(path, graph, interval)
    return path


def crop_patch(canvas: RasterTile, center, size_px: int) -> RasterTile:
    """Square crop around a world point, zero padded outside the canvas."""
    size_px = int(size_px)
    if size_px <= 0:
        raise ParameterError(f"crop size must be positive, got {size_px}")
    cx, cy = (float(v) for v in center)
    if not (math.isfinite(cx) and math.isfinite(cy)):
        raise ParameterError(f"non-finite crop center {center}")
    ox, oy = canvas.origin
    res = canvas.resolution
    # pixel (r, c) sits at (ox + c*res, oy + r*res)
    c0 = int(math.floor((cx - ox) / res - (size_px - 1) / 2 + 0.5))
    r0 = int(math.floor((cy - oy) / res - (size_px - 1) / 2 + 0.5))
    out = np.zeros((size_px, size_px, canvas.channels), dtype=np.float64)
    h, w = canvas.height, canvas.width
    rs, re = max(r0, 0), min(r0 + size_px, h)
    cs, ce = max(c0, 0), min(c0 + size_px, w)
    if rs < re and cs < ce:
        out[rs - r0 : re - r0, cs - c0 : ce - c0] = canvas.data[rs:re, cs:ce]
    return RasterTile(out, (ox + c0 * res, oy + r0 * res), res)
