from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import directed_hausdorff
from shapely.geometry import box
from sklearn.metrics import average_precision_score

from geoplan import metrics
from geoplan.errors import DataError, DegenerateInputError, DimensionError, ParameterError
from geoplan.metrics import RankedResult, RoadMask


def random_results(rng, n=100, m=30):
    out = []
    for q in range(n):
        ranked = [int(i) for i in rng.permutation(m)]
        truth = set(int(t) for t in rng.choice(m, int(rng.integers(0, 4)), replace=False))
        out.append(RankedResult(q, ranked, truth))
    return out


def test_topk_recall_brute_force_and_monotone():
    rs = random_results(np.random.default_rng(0))
    prev = 0.0
    for k in range(1, 31):
        want = np.mean([any(c in r.truth for c in r.ranked_ids[:k]) for r in rs])
        got = metrics.topk_recall(rs, k)
        assert got == pytest.approx(want)
        assert got >= prev
        prev = got


def test_ap_matches_sklearn():
    rng = np.random.default_rng(1)
    for r in random_results(rng):
        ap = metrics.query_ap(r)
        if not r.truth:
            assert ap is None
            continue
        y = [c in r.truth for c in r.ranked_ids]
        scores = -np.arange(len(r.ranked_ids), dtype=float)
        assert ap == pytest.approx(average_precision_score(y, scores), abs=1e-12)
        assert 0.0 <= ap <= 1.0


def test_ap_summary_excludes_empty_truth():
    rs = [RankedResult(0, [1, 2, 3], {2}), RankedResult(1, [1, 2], set())]
    s = metrics.average_precision_summary(rs)
    assert s.mean == pytest.approx(0.5) and s.excluded == 1


def test_ap_with_truth_outside_ranking():
    # a relevant item never retrieved caps AP below one
    assert metrics.query_ap(RankedResult(0, [1, 2], {1, 9})) == pytest.approx(0.5)


def test_ranked_result_validation():
    with pytest.raises(DataError):
        RankedResult(0, [1, 1], {1})
    with pytest.raises(ParameterError):
        metrics.topk_recall([], 1)
    with pytest.raises(ParameterError):
        metrics.topk_recall([RankedResult(0, [1], {1})], 0)


def test_top_percent_k():
    assert metrics.top_percent_k(100) == 1
    assert metrics.top_percent_k(150) == 2
    assert metrics.top_percent_k(5) == 1


def test_footprint_overlap_matches_shapely():
    rng = np.random.default_rng(2)
    for _ in range(100):
        q = sorted(rng.uniform(0, 10, 2)), sorted(rng.uniform(0, 10, 2))
        t = sorted(rng.uniform(0, 10, 2)), sorted(rng.uniform(0, 10, 2))
        qb = (q[0][0], q[1][0], q[0][1], q[1][1])
        tb = (t[0][0], t[1][0], t[0][1], t[1][1])
        want = box(*qb).intersection(box(*tb)).area / box(*qb).area
        assert metrics.footprint_overlap(qb, tb) == pytest.approx(want, abs=1e-12)
    with pytest.raises(DegenerateInputError):
        metrics.footprint_overlap((0, 0, 0, 1), (0, 0, 1, 1))


def test_hit_rate():
    rs = [RankedResult(i, [0], {0}) for i in range(4)]
    assert metrics.hit_rate(rs, [0.5, 0.49, 1.0, 0.0]) == 0.5
    with pytest.raises(DataError):
        metrics.hit_rate(rs, [0.5])
    with pytest.raises(DataError):
        metrics.hit_rate(rs, [0.5, None, 1.0, 0.0])


def test_trajectory_similarity_matches_scipy():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a = rng.normal(size=(int(rng.integers(1, 40)), 2))
        b = rng.normal(size=(int(rng.integers(1, 40)), 2))
        want = max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])
        assert metrics.trajectory_similarity(a, b) == pytest.approx(want, abs=1e-12)


pts = st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=1, max_size=10)


@settings(max_examples=100, deadline=None)
@given(a=pts, b=pts)
def test_trajectory_similarity_symmetric_and_zero_on_self(a, b):
    assert metrics.trajectory_similarity(a, b) == metrics.trajectory_similarity(b, a)
    assert metrics.trajectory_similarity(a, a) == 0.0


def test_densify():
    out = metrics.densify(np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 2.0]]), 1.0)
    np.testing.assert_allclose(out, [[0, 0], [1, 0], [2, 0], [3, 0], [3, 1], [3, 2]])
    # densification fills gaps between waypoints: a parallel offset path measures its true offset
    a = np.array([[0.0, 0.0], [10.0, 0.0]])
    b = np.array([[0.0, 1.0], [5.0, 1.0], [10.0, 1.0]])
    assert metrics.trajectory_similarity(a, b) > 1.0
    assert metrics.trajectory_similarity(a, b, densify=0.5) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        metrics.densify(a, 0.0)


def test_road_mask_and_success():
    grid = np.array([[True, True], [False, True]])
    road = RoadMask(grid, 10.0)
    np.testing.assert_array_equal(road.on_road([[5, 5], [5, 15], [15, 15], [-1, 0]]), [True, False, True, False])
    path = [[5, 5], [15, 5], [15, 15]]
    assert metrics.success(path, (15, 14), road)
    assert not metrics.success(path, (15, 25), road)
    assert not metrics.success([[5, 5], [5, 15], [15, 15]], (15, 15), road)
    assert not metrics.success([], (0, 0), road)
    shifted = road.translated(100, 0)
    assert shifted.on_road([[105, 5]])[0]


def test_success_rate():
    road = RoadMask(np.ones((3, 3), bool), 10.0)
    pairs = [metrics.TrajectoryPair(np.array([[5, 5], [15, 5]]), np.zeros((1, 2)), (15, 5)),
             metrics.TrajectoryPair(np.array([[5, 5]]), np.zeros((1, 2)), (25, 25))]
    assert metrics.success_rate(pairs, road) == 0.5


def test_visual_consistency_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(100):
        length = int(rng.integers(1, 40))
        g, s = rng.normal(size=(length, 5)), rng.normal(size=(length, 5))
        m = int(rng.integers(1, 20))
        idx = [round(i * (length - 1) / (min(m, length) - 1)) if min(m, length) > 1 else 0
               for i in range(min(m, length))]
        want = np.mean([g[i] @ s[i] / np.linalg.norm(g[i]) / np.linalg.norm(s[i]) for i in idx])
        assert metrics.visual_consistency(g, s, m) == pytest.approx(want, abs=1e-12)
        assert -1.0 <= metrics.visual_consistency(g, s, m) <= 1.0


def test_sample_indices_cover_ends():
    for length in range(1, 50):
        idx = metrics.sample_indices(length, 16)
        assert idx[0] == 0 and idx[-1] == length - 1
        assert len(idx) == min(16, length)


def test_visual_consistency_errors():
    with pytest.raises(DimensionError):
        metrics.visual_consistency(np.ones((3, 2)), np.ones((4, 2)))
    with pytest.raises(DegenerateInputError):
        metrics.visual_consistency(np.zeros((2, 2)), np.ones((2, 2)))
