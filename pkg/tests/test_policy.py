from __future__ import annotations

import numpy as np
import pytest

from geoplan.checkpoint import load_checkpoint, save_checkpoint
from geoplan.env import INVALID, bfs_distances, generate_world, sample_episodes, step
from geoplan.errors import NodeLookupError, ParameterError
from geoplan.policy import (
    Conditioner,
    PolicyParams,
    forward_batch,
    pad_histories,
    plausible_actions,
    policy_forward,
    rollout_many,
    sample_rollout,
    vpft_build,
    vpft_loss,
    vpft_train,
)
from geoplan.rng import stream


def recurrence(history, cond, p):
    h = np.zeros(p.hidden)
    for c in history:
        h = np.maximum(p.hist @ h + p.embed[c] + p.cond_proj @ cond, 0)
    return p.out @ h


def test_forward_matches_recurrence():
    rng = np.random.default_rng(0)
    p = PolicyParams.init(20, 4, 6, seed=1, scale=1.0)
    for _ in range(50):
        hist = list(rng.integers(0, 20, int(rng.integers(1, 8))))
        cond = rng.normal(size=4)
        np.testing.assert_allclose(policy_forward(hist, cond, p, window=None), recurrence(hist, cond, p), atol=1e-12)
        np.testing.assert_allclose(policy_forward(hist, cond, p, window=3), recurrence(hist[-3:], cond, p), atol=1e-12)


def test_padding_is_transparent():
    rng = np.random.default_rng(1)
    p = PolicyParams.init(10, 3, 5, seed=0, scale=1.0)
    hists = [[1], [2, 3, 4], [5, 6]]
    conds = rng.normal(size=(3, 3))
    batch = forward_batch(pad_histories(hists, 4), conds, p)
    for h, c, row in zip(hists, conds, batch):
        np.testing.assert_allclose(row, recurrence(h, c, p), atol=1e-12)


def test_forward_errors():
    p = PolicyParams.init(5, 2, 3, seed=0)
    with pytest.raises(ParameterError):
        policy_forward([], np.zeros(2), p)
    with pytest.raises(NodeLookupError):
        policy_forward([7], np.zeros(2), p)


def small_setup(seed=0):
    w = generate_world(6, 0.2, seed)
    z = stream(seed, "test-z").normal(size=(w.cells, 4))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return w, Conditioner(w, z), sample_episodes(w, 6, 2, seed)


def test_conditioner_next_is_one_hop_closer():
    w, cond, _ = small_setup()
    for sg in w.open_cells():
        d = bfs_distances(w, sg)
        for c in w.open_cells():
            nxt = int(cond.next_cell(c, sg))
            if c == sg:
                assert nxt == c
            else:
                assert d[nxt] == d[c] - 1
                first = next(step(w, c, a) for a in range(4) if step(w, c, a) != INVALID
                             and d[step(w, c, a)] == d[c] - 1)
                assert nxt == first
            np.testing.assert_array_equal(cond(c, sg), cond.z[nxt])


def test_plausible_actions():
    w, cond, _ = small_setup()
    rng = np.random.default_rng(0)
    for c in w.open_cells():
        for wp in w.open_cells()[:5]:
            d = bfs_distances(w, wp)
            acts = plausible_actions(w, c, d, 8, rng)
            valid = [a for a in range(4) if step(w, c, a) != INVALID]
            assert set(acts) <= set(valid)
            good = [a for a in valid if d[step(w, c, a)] <= d[c]]
            if good:
                assert acts == good
            assert len(plausible_actions(w, c, d, 1, rng)) <= 1


def test_vpft_corpus_targets_are_plausible_and_deterministic():
    w, cond, eps = small_setup()
    a = vpft_build(w, eps, cond, k=8, seed=3)
    b = vpft_build(w, eps, cond, k=8, seed=3)
    np.testing.assert_array_equal(a.targets, b.targets)
    np.testing.assert_array_equal(a.histories, b.histories)
    assert all(t in s for t, s in zip(a.targets, a.plausible))
    assert a.histories.shape[1] == 4


def test_vpft_gradient_finite_difference():
    w, cond, eps = small_setup()
    corpus = vpft_build(w, eps[:1], cond, walks=1, walk_len=4, seed=0)
    p = PolicyParams.init(w.cells, 4, 5, seed=2, scale=1.0)
    _, g = vpft_loss(corpus, p)
    rng = np.random.default_rng(0)
    for name in p.NAMES:
        arr, garr = getattr(p, name), getattr(g, name)
        for _ in range(10):
            idx = tuple(int(rng.integers(0, s)) for s in arr.shape)
            arr[idx] += 1e-6
            lp = vpft_loss(corpus, p, grad=False)
            arr[idx] -= 2e-6
            lm = vpft_loss(corpus, p, grad=False)
            arr[idx] += 1e-6
            assert garr[idx] == pytest.approx((lp - lm) / 2e-6, rel=1e-4, abs=1e-9)


def test_vpft_training_reduces_loss():
    w, cond, eps = small_setup()
    corpus = vpft_build(w, eps, cond, seed=0)
    p0 = PolicyParams.init(w.cells, 4, 16, seed=0)
    p1, losses = vpft_train(corpus, p0, steps=100, lr=0.5)
    assert losses[-1] < losses[0]
    assert vpft_loss(corpus, p1, grad=False) < vpft_loss(corpus, p0, grad=False)
    with pytest.raises(ParameterError):
        vpft_build(w, eps, cond, k=0)


def test_batched_rollouts_match_single():
    w, cond, eps = small_setup()
    p = PolicyParams.init(w.cells, 4, 8, seed=4)
    batch = rollout_many(w, eps, cond, p, greedy=True)
    for ep, path, inv in zip(eps, batch.paths, batch.invalid):
        steps = sample_rollout(w, ep, cond, p, np.random.default_rng(0), ep.max_steps, greedy=True)
        cells = [ep.start] + [s.next_state for s in steps if s.next_state != INVALID]
        assert cells == path
        assert inv == (steps[-1].next_state == INVALID)


def test_sampled_rollouts_reproducible():
    w, cond, eps = small_setup()
    p = PolicyParams.init(w.cells, 4, 8, seed=4)
    a = rollout_many(w, eps, cond, p, greedy=False, seed=9)
    b = rollout_many(w, eps, cond, p, greedy=False, seed=9)
    assert a.paths == b.paths


def test_params_checkpoint_roundtrip(tmp_path, schema_check):
    import json

    p = PolicyParams.init(12, 3, 4, seed=0)
    save_checkpoint(tmp_path / "p.bin", p.arrays(), seed=7, meta={"kind": "policy"})
    arrays, side = load_checkpoint(tmp_path / "p.bin")
    schema_check("checkpoint", json.loads((tmp_path / "p.bin.json").read_text()))
    q = PolicyParams.from_arrays(arrays)
    np.testing.assert_array_equal(q.flat(), p.flat())
    assert side["seed"] == 7
    assert (tmp_path / "p.bin").stat().st_size == 8 * p.flat().size
