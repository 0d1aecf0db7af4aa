from __future__ import annotations

import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoplan.canvas import Edge, Node, RasterTile, TopoGraph
from geoplan.errors import NodeLookupError, NoPathError, ParameterError
from geoplan.planner import GraphIndex, PlanQuery, astar, crop_patch, path_polyline, plan, resample


def random_graph(rng, n, extra=2.0):
    ids = rng.permutation(10 * n)[:n]
    xy = rng.uniform(0, 100, (n, 2))
    nodes = [Node(int(i), float(x), float(y)) for i, (x, y) in zip(ids, xy)]
    edges = []
    for _ in range(int(extra * n)):
        a, b = rng.choice(n, 2, replace=False)
        poly = np.array([xy[a], (xy[a] + xy[b]) / 2 + rng.normal(0, 3, 2), xy[b]])
        length = float(np.hypot(*np.diff(poly, axis=0).T).sum())
        edges.append(Edge(len(edges), int(ids[a]), int(ids[b]), poly, length, float(rng.uniform(0, 0.5))))
    return TopoGraph(nodes, edges)


def nx_cost(g, alpha, beta, s, t, disabled=frozenset()):
    G = nx.MultiGraph()
    pos = {n.id: np.array([n.x, n.y]) for n in g.nodes}
    G.add_nodes_from(pos)
    for e in g.edges:
        if e.id not in disabled:
            G.add_edge(e.a, e.b, weight=alpha * float(np.linalg.norm(pos[e.a] - pos[e.b])) + beta * e.curvature)
    return nx.dijkstra_path_length(G, s, t, weight="weight")


def test_astar_matches_dijkstra():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 100:
        g = random_graph(rng, int(rng.integers(2, 51)))
        s, t = (g.nodes[i].id for i in rng.choice(len(g.nodes), 2, replace=False))
        alpha, beta = float(rng.uniform(0.5, 2)), float(rng.uniform(0, 5))
        try:
            want = nx_cost(g, alpha, beta, s, t)
        except nx.NetworkXNoPath:
            with pytest.raises(NoPathError):
                astar(g, PlanQuery(s, t, alpha, beta))
            continue
        path = astar(g, PlanQuery(s, t, alpha, beta))
        assert path.cost == pytest.approx(want, rel=1e-12, abs=1e-9)
        assert path.nodes[0] == s and path.nodes[-1] == t
        checked += 1


def test_disabled_edges_respected():
    rng = np.random.default_rng(1)
    for _ in range(30):
        g = random_graph(rng, 20, extra=3)
        s, t = g.nodes[0].id, g.nodes[1].id
        off = frozenset(int(e) for e in rng.choice(len(g.edges), 10, replace=False))
        try:
            want = nx_cost(g, 1, 0.5, s, t, off)
        except nx.NetworkXNoPath:
            with pytest.raises(NoPathError):
                astar(g, PlanQuery(s, t, 1, 0.5, off))
            continue
        path = astar(g, PlanQuery(s, t, 1, 0.5, off))
        assert not off.intersection(path.edges)
        assert path.cost == pytest.approx(want, rel=1e-12)


def chain(n=3, spacing=(3.0, 4.0)):
    nodes = [Node(i, spacing[0] * i, spacing[1] * i) for i in range(n)]
    edges = [Edge(i, i, i + 1, np.array([[nodes[i].x, nodes[i].y], [nodes[i + 1].x, nodes[i + 1].y]]),
                  5.0, 0.0) for i in range(n - 1)]
    return TopoGraph(nodes, edges)


def test_straight_chain_cost_is_euclidean_sum():
    path = astar(chain(), PlanQuery(0, 2, 1.0, 0.5))
    assert path.cost == pytest.approx(10.0)
    assert path.nodes == [0, 1, 2]


def test_ties_prefer_lower_node_id():
    # unit square: two equal routes 0->1->3 and 0->2->3
    xy = {0: (0, 0), 1: (1, 0), 2: (0, 1), 3: (1, 1)}
    nodes = [Node(i, *map(float, p)) for i, p in xy.items()]
    pairs = [(0, 2), (0, 1), (2, 3), (1, 3)]
    edges = [Edge(k, a, b, np.array([xy[a], xy[b]], dtype=float), 1.0, 0.0) for k, (a, b) in enumerate(pairs)]
    assert astar(TopoGraph(nodes, edges), PlanQuery(0, 3, 1, 0)).nodes == [0, 1, 3]


def test_start_equals_goal_and_errors():
    g = chain()
    assert astar(g, PlanQuery(1, 1)).cost == 0.0
    with pytest.raises(NodeLookupError):
        astar(g, PlanQuery(0, 99))
    with pytest.raises(ParameterError):
        PlanQuery(0, 1, alpha=-1)


def test_path_polyline_orients_edges():
    g = chain(4)
    path = astar(g, PlanQuery(3, 0))
    poly = path_polyline(path, g)
    np.testing.assert_allclose(poly[0], [9, 12])
    np.testing.assert_allclose(poly[-1], [0, 0])


@settings(max_examples=100, deadline=None)
@given(pts=st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=2, max_size=8),
       interval=st.floats(0.5, 20))
def test_resample_spacing_and_endpoints(pts, interval):
    poly = np.array(pts)
    out = resample(poly, interval)
    np.testing.assert_allclose(out[0], poly[0], atol=1e-9)
    np.testing.assert_allclose(out[-1], poly[-1])
    total = float(np.hypot(*np.diff(poly, axis=0).T).sum())
    expected = math.floor(total / interval + 1e-9) + 1
    if total - (expected - 1) * interval > 1e-9 * max(1.0, total):
        expected += 1
    assert len(out) == max(1, expected)
    # consecutive samples are never further apart than one interval
    assert np.all(np.hypot(*np.diff(out, axis=0).T) <= interval + 1e-9)


def test_resample_straight_line_exact():
    out = resample(np.array([[0.0, 0.0], [20.0, 0.0]]), 7.5)
    np.testing.assert_allclose(out, [[0, 0], [7.5, 0], [15, 0], [20, 0]])


def test_plan_json(schema_check):
    p = plan(chain(4), PlanQuery(0, 3), interval=2.5)
    doc = {"nodes": p.nodes, "waypoints": p.waypoints.tolist(), "cost": p.cost}
    schema_check("plan", doc)


def test_crop_patch_matches_loop():
    rng = np.random.default_rng(2)
    canvas = RasterTile(rng.random((10, 12)), origin=(5.0, -3.0), resolution=0.5)
    for _ in range(50):
        cx, cy = rng.uniform(0, 15), rng.uniform(-6, 6)
        size = int(rng.integers(1, 8))
        patch = crop_patch(canvas, (cx, cy), size)
        c0 = math.floor((cx - 5.0) / 0.5 - (size - 1) / 2 + 0.5)
        r0 = math.floor((cy + 3.0) / 0.5 - (size - 1) / 2 + 0.5)
        for i in range(size):
            for j in range(size):
                r, c = r0 + i, c0 + j
                inside = 0 <= r < 10 and 0 <= c < 12
                assert patch.data[i, j, 0] == (canvas.data[r, c, 0] if inside else 0.0)
        assert patch.origin == pytest.approx((5.0 + c0 * 0.5, -3.0 + r0 * 0.5))


def test_graph_index_replan_reuses_arrays():
    g = random_graph(np.random.default_rng(3), 30)
    gi = GraphIndex(g)
    s, t = g.nodes[0].id, g.nodes[5].id
    try:
        a = astar(gi, PlanQuery(s, t))
    except NoPathError:
        return
    assert astar(g, PlanQuery(s, t)).cost == a.cost
