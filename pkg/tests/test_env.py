from __future__ import annotations

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoplan.env import (
    DOWN,
    INVALID,
    LEFT,
    RIGHT,
    STAY,
    UP,
    GridWorld,
    bfs_distances,
    generate_world,
    load_episodes,
    observe,
    reference_path,
    render_satellite,
    render_view,
    sample_episodes,
    save_episodes,
    shortest_path,
    step,
)
from geoplan.errors import GenerationError, ParameterError


def grid_nx(world: GridWorld) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(world.open_cells())
    for c in world.open_cells():
        for a in (DOWN, RIGHT):
            v = step(world, c, a)
            if v != INVALID:
                g.add_edge(c, v)
    return g


def test_step_semantics():
    w = GridWorld(3, frozenset({4}))
    assert step(w, 0, UP) == INVALID
    assert step(w, 0, LEFT) == INVALID
    assert step(w, 0, RIGHT) == 1
    assert step(w, 0, DOWN) == 3
    assert step(w, 1, DOWN) == INVALID  # blocked centre
    assert step(w, 0, STAY) == INVALID


@settings(max_examples=30, deadline=None)
@given(size=st.integers(2, 9), density=st.sampled_from([0.0, 0.1, 0.2, 0.3]), seed=st.integers(0, 10_000))
def test_generated_worlds_are_connected_with_exact_density(size, density, seed):
    try:
        w = generate_world(size, density, seed)
    except GenerationError:
        return
    assert len(w.blocked) == round(density * size * size)
    assert nx.is_connected(grid_nx(w))
    assert generate_world(size, density, seed) == w


def test_generate_world_validation():
    with pytest.raises(ParameterError):
        generate_world(8, 0.5, 0)
    with pytest.raises(ParameterError):
        generate_world(0, 0.1, 0)


def test_bfs_matches_networkx():
    for seed in range(10):
        w = generate_world(7, 0.25, seed)
        g = grid_nx(w)
        target = w.open_cells()[seed % len(w.open_cells())]
        d = bfs_distances(w, target)
        ref = nx.single_source_shortest_path_length(g, target)
        for c in range(w.cells):
            assert d[c] == ref.get(c, -1)
        assert not d.flags.writeable


def test_shortest_path_is_valid_and_optimal():
    w = generate_world(8, 0.2, 3)
    cells = w.open_cells()
    for a, b in zip(cells[:10], cells[-10:]):
        path = shortest_path(w, a, b)
        assert path[0] == a and path[-1] == b
        assert len(path) - 1 == bfs_distances(w, b)[a]
        assert all(b2 in [step(w, a2, m) for m in range(4)] for a2, b2 in zip(path, path[1:]))


@pytest.mark.parametrize("stops", [1, 2, 3])
def test_sample_episodes(stops):
    w = generate_world(8, 0.2, 1)
    eps = sample_episodes(w, 30, stops, seed=5)
    assert eps == sample_episodes(w, 30, stops, seed=5)
    for ep in eps:
        cells = [ep.start, *ep.subgoals]
        assert len(set(cells)) == len(cells) == stops + 2
        assert all(w.is_open(c) for c in cells)
        path = reference_path(w, ep)
        assert ep.max_steps == 4 * (len(path) - 1)
        hops = sum(bfs_distances(w, b)[a] for a, b in zip(cells, cells[1:]))
        assert len(path) - 1 == hops
        order = [path.index(ep.stops[0])]
        for s in [*ep.stops[1:], ep.goal]:
            order.append(path.index(s, order[-1]))
        assert order == sorted(order)


def test_sample_episodes_validation():
    w = generate_world(4, 0.0, 0)
    with pytest.raises(ParameterError):
        sample_episodes(w, 1, 4, 0)
    with pytest.raises(GenerationError):
        sample_episodes(GridWorld(2, frozenset({0, 1})), 1, 1, 0)


def test_world_and_episode_json(tmp_path, schema_check):
    w = generate_world(8, 0.2, 2)
    schema_check("world", w.to_json())
    w.save(tmp_path / "w.json")
    assert GridWorld.load(tmp_path / "w.json") == w
    eps = sample_episodes(w, 5, 2, 0)
    save_episodes(tmp_path / "e.json", w, eps)
    schema_check("episodes", [e.to_json(w) for e in eps])
    assert load_episodes(tmp_path / "e.json", w) == eps


def test_centers_and_lookup():
    w = GridWorld(4, frozenset(), cell_meters=10.0)
    assert w.center(w.cell(1, 2)) == (25.0, 15.0)
    assert w.cell_at(25.0, 15.0) == w.cell(1, 2)
    assert w.cell_at(-1.0, 5.0) is None


def test_render_view_and_observe():
    w = GridWorld(3, frozenset({1}))
    view = render_view(w, 0, ppc=1)
    expected = np.array([[0, 0, 0], [0, 0.5, 0], [0, 1, 1]])
    np.testing.assert_array_equal(view.data[:, :, 0], expected)
    obs = observe(w, 0, encoder_seed=0)
    assert np.linalg.norm(obs.embedding) == pytest.approx(1.0)
    assert obs.tokens.shape == (9, 16)
    with pytest.raises(ParameterError):
        observe(w, 1, encoder_seed=0)


def test_render_satellite():
    w = generate_world(6, 0.2, 0)
    a, b = render_satellite(w, 0), render_satellite(w, 0)
    np.testing.assert_array_equal(a.data, b.data)
    img = a.data[:, :, 0].reshape(6, 4, 6, 4).mean(axis=(1, 3))
    assert np.all((img > 0.5) == w.open_grid())
