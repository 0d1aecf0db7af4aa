from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geoplan.env import INVALID, bfs_distances, generate_world, step
from geoplan.errors import DegenerateInputError, ParameterError
from geoplan.reward import (
    ProgressMap,
    Transition,
    classify,
    group_advantage,
    parse_transition,
    r_geo,
    r_prog,
    r_total,
    write_reward_trace,
)


def test_parse_transition_exhaustive():
    w = generate_world(6, 0.2, 0)
    sg = w.open_cells()[7]
    pm = ProgressMap.build(w, sg)
    d = bfs_distances(w, sg)
    for c in w.open_cells():
        for a in range(5):
            nxt = step(w, c, a)
            cls = parse_transition(w, c, nxt, pm)
            if nxt == INVALID:
                assert cls is Transition.INVALID
            elif d[nxt] == d[c] - 1:
                assert cls is Transition.OPTIMAL
            else:
                assert cls is Transition.NON_OPTIMAL
            vec = classify(np.array([d[c]]), np.array([d[nxt] if nxt != INVALID else d[c]]),
                           np.array([nxt != INVALID]))
            assert int(vec[0]) == int(cls)


def test_teleport_is_invalid():
    w = generate_world(6, 0.0, 0)
    pm = ProgressMap.build(w, 35)
    assert parse_transition(w, 0, 14, pm) is Transition.INVALID


def test_reward_values():
    assert r_prog(Transition.OPTIMAL) == 1.0
    assert r_prog(Transition.NON_OPTIMAL) == 0.0
    assert r_prog(Transition.INVALID) == -5.0
    np.testing.assert_array_equal(r_prog(np.array([0, 1, 2])), [1.0, 0.0, -5.0])
    assert r_total(1.0, 0.4) == pytest.approx(1.2)
    assert r_total(1.0, 0.4, beta=0.0) == 1.0


def test_r_geo_is_cosine():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b = rng.normal(size=5), rng.normal(size=5)
        assert r_geo(a, b) == pytest.approx(a @ b / np.linalg.norm(a) / np.linalg.norm(b))
    with pytest.raises(DegenerateInputError):
        r_geo(np.zeros(3), np.ones(3))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 32), elements=st.floats(-10, 10, allow_nan=False)))
def test_group_advantage_normalized(r):
    adv = group_advantage(r)
    if r.std() < 1e-12:
        assert np.all(adv == 0)
    elif r.std() > 1e-6:
        assert adv.mean() == pytest.approx(0.0, abs=1e-9)
        assert adv.std() == pytest.approx(1.0, rel=1e-9)
        # order preserving: larger reward never gets a smaller advantage
        assert np.all((r[:, None] < r[None, :]) <= (adv[:, None] <= adv[None, :]))


def test_group_advantage_batched_and_validation():
    r = np.array([[1.0, 0.0, -5.0, 1.0], [2.0, 2.0, 2.0, 2.0]])
    adv = group_advantage(r)
    np.testing.assert_allclose(adv[0], (r[0] - r[0].mean()) / r[0].std())
    np.testing.assert_array_equal(adv[1], 0.0)
    with pytest.raises(ParameterError):
        group_advantage([1.0])


def test_reward_trace_csv(tmp_path):
    path = tmp_path / "t.csv"
    write_reward_trace(path, [(0, 1, 2, 0, 1.0, 0.5, 1.25, 0.3)])
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["episode", "step", "k", "class", "rProg", "rGeo", "rTotal", "advantage"]
    assert rows[1][3] == "OPTIMAL"
