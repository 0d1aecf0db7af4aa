"""Conditional autoregressive next-move policy and its supervised warm start.

The hidden state folds the recent cell history through an order-1 recurrence

    h_t = relu(hist @ h_{t-1} + embed[cell_t] + cond_proj @ cond)

and the five logits (up, down, left, right, stay) are ``out @ h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import INVALID, GridWorld, bfs_distances, step, transition_table
from .errors import NodeLookupError, ParameterError
from .rng import stream

N_ACTIONS = 5
DEFAULT_WINDOW = 4


@dataclass
class PolicyParams:
    embed: np.ndarray  # (cells, hidden)
    cond_proj: np.ndarray  # (hidden, cond_dim)
    hist: np.ndarray  # (hidden, hidden)
    out: np.ndarray  # (5, hidden)

    NAMES = ("embed", "cond_proj", "hist", "out")

    @classmethod
    def init(cls, cells: int, cond_dim: int, hidden: int, seed: int, scale: float = 0.3) -> "PolicyParams":
        rng = stream(seed, "policy", cells, cond_dim, hidden)
        return cls(
            scale * rng.standard_normal((cells, hidden)),
            scale * rng.standard_normal((hidden, cond_dim)) / math.sqrt(cond_dim),
            scale * rng.standard_normal((hidden, hidden)) / math.sqrt(hidden),
            scale * rng.standard_normal((N_ACTIONS, hidden)) / math.sqrt(hidden),
        )

    @classmethod
    def zeros(cls, cells: int, cond_dim: int, hidden: int) -> "PolicyParams":
        return cls(
            np.zeros((cells, hidden)), np.zeros((hidden, cond_dim)), np.zeros((hidden, hidden)),
            np.zeros((N_ACTIONS, hidden)),
        )

    @property
    def cells(self) -> int:
        return self.embed.shape[0]

    @property
    def hidden(self) -> int:
        return self.embed.shape[1]

    @property
    def cond_dim(self) -> int:
        return self.cond_proj.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in self.NAMES}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "PolicyParams":
        return cls(*(np.array(arrays[n], dtype=np.float64) for n in cls.NAMES))

    def copy(self) -> "PolicyParams":
        return PolicyParams(*(getattr(self, n).copy() for n in self.NAMES))

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams(*(np.zeros_like(getattr(self, n)) for n in self.NAMES))

    def axpy(self, alpha: float, other: "PolicyParams") -> None:
        for n in self.NAMES:
            getattr(self, n)[...] += alpha * getattr(other, n)

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in self.NAMES])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, n))) for n in self.NAMES)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def pad_histories(histories, window: int | None) -> np.ndarray:
    """Left-pad (with -1) the last ``window`` cells of each history into one array."""
    hs = [list(h) if window is None else list(h)[-window:] for h in histories]
    w = max(len(h) for h in hs)
    out = np.full((len(hs), w), -1, dtype=np.int64)
    for i, h in enumerate(hs):
        if h:
            out[i, w - len(h):] = h
    return out


def forward_batch(hist: np.ndarray, conds: np.ndarray, params: PolicyParams, keep: bool = False):
    """Logits (B, 5) for padded histories (B, W) and conditioning vectors (B, D)."""
    hist = np.asarray(hist, dtype=np.int64)
    conds = np.asarray(conds, dtype=np.float64)
    if hist.ndim != 2 or hist.shape[1] == 0 or np.any(hist[:, -1] < 0):
        raise ParameterError("every history needs at least one cell")
    if np.any(hist >= params.cells):
        raise NodeLookupError(f"cell id {int(hist.max())} outside the policy's {params.cells} cells")
    b = hist.shape[0]
    h = np.zeros((b, params.hidden))
    cterm = conds @ params.cond_proj.T
    steps = []
    for t in range(hist.shape[1]):
        cells = hist[:, t]
        live = cells >= 0
        pre = h @ params.hist.T + params.embed[np.maximum(cells, 0)] + cterm
        new = np.where(live[:, None], np.maximum(pre, 0.0), h)
        steps.append((h, pre, live))
        h = new
    logits = h @ params.out.T
    if keep:
        return logits, (hist, conds, steps, h)
    return logits


def _scatter_rows(idx: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    """Sum ``rows`` into ``n`` buckets by ``idx`` (dense one-hot product, faster than add.at)."""
    onehot = np.zeros((len(idx), n))
    onehot[np.arange(len(idx)), idx] = 1.0
    return onehot.T @ rows


def backward_batch(dlogits: np.ndarray, params: PolicyParams, cache) -> PolicyParams:
    hist, conds, steps, h_last = cache
    g = params.zeros_like()
    g.out = dlogits.T @ h_last
    dh = dlogits @ params.out
    dcterm = np.zeros_like(dh)
    for t in range(len(steps) - 1, -1, -1):
        h_prev, pre, live = steps[t]
        dpre = np.where(live[:, None] & (pre > 0), dh, 0.0)
        g.hist += dpre.T @ h_prev
        g.embed += _scatter_rows(np.maximum(hist[:, t], 0), dpre, params.cells)
        dcterm += dpre
        # padded steps pass the hidden state through unchanged
        dh = np.where(live[:, None], dpre @ params.hist, dh)
    g.cond_proj = dcterm.T @ conds
    return g


def policy_forward(history, cond, params: PolicyParams, window: int | None = DEFAULT_WINDOW) -> np.ndarray:
    """Five action logits for one (history, conditioning) pair."""
    history = list(history)
    if not history:
        raise ParameterError("history must not be empty")
    for c in history:
        if not 0 <= int(c) < params.cells:
            raise NodeLookupError(f"unknown cell id {c}")
    return forward_batch(pad_histories([history], window), np.asarray(cond)[None], params)[0]


# ---------------------------------------------------------------- rollouts


class Conditioner:
    """Per-step conditioning: embedding of the next cell on a shortest path to the subgoal."""

    def __init__(self, world: GridWorld, cell_embeddings: np.ndarray):
        self.world = world
        self.z = np.asarray(cell_embeddings, dtype=np.float64)
        n = world.cells
        self.dist = np.full((n, n), -1, dtype=np.int64)  # dist[subgoal, cell]
        self.next = np.tile(np.arange(n), (n, 1))  # next[subgoal, cell]
        table = transition_table(world)
        for sg in world.open_cells():
            d = bfs_distances(world, sg)
            self.dist[sg] = d
            for cell in world.open_cells():
                if d[cell] > 0:
                    for a in range(4):
                        v = table[cell, a]
                        if v != INVALID and d[v] == d[cell] - 1:
                            self.next[sg, cell] = v
                            break

    def next_cell(self, cell, subgoal):
        return self.next[subgoal, cell]

    def __call__(self, cell, subgoal) -> np.ndarray:
        return self.z[self.next[subgoal, cell]]


@dataclass
class RolloutStep:
    state: int
    logits: np.ndarray
    action: int
    next_state: int
    log_prob: float


def sample_rollout(world: GridWorld, episode, conditioner: Conditioner, params: PolicyParams,
                   rng: np.random.Generator, horizon: int, greedy: bool = False,
                   window: int | None = DEFAULT_WINDOW) -> list[RolloutStep]:
    """Autoregressive rollout; stops at an invalid move, at the goal, or at ``horizon``."""
    if horizon < 1:
        raise ParameterError(f"horizon must be >= 1, got {horizon}")
    subgoals = list(episode.subgoals)
    k = 0
    history = [episode.start]
    steps = []
    for _ in range(horizon):
        cell = history[-1]
        logits = policy_forward(history, conditioner(cell, subgoals[k]), params, window)
        lp = log_softmax(logits)
        a = int(np.argmax(logits)) if greedy else int(rng.choice(N_ACTIONS, p=np.exp(lp)))
        nxt = step(world, cell, a)
        steps.append(RolloutStep(cell, logits, a, nxt, float(lp[a])))
        if nxt == INVALID:
            break
        history.append(nxt)
        if nxt == subgoals[k]:
            k += 1
            if k == len(subgoals):
                break
    return steps


@dataclass
class BatchRollout:
    paths: list[list[int]]  # visited cells per episode, start included
    invalid: np.ndarray  # episode ended on an invalid move
    reached: np.ndarray  # all subgoals visited in order


def rollout_many(world: GridWorld, episodes, conditioner: Conditioner, params: PolicyParams,
                 greedy: bool = True, seed: int = 0, window: int | None = DEFAULT_WINDOW) -> BatchRollout:
    """Lockstep rollouts of many episodes (greedy, or sampled from per-episode streams)."""
    n = len(episodes)
    table = transition_table(world)
    subgoals = [list(e.subgoals) for e in episodes]
    k = np.zeros(n, dtype=np.int64)
    paths = [[e.start] for e in episodes]
    alive = np.ones(n, dtype=bool)
    invalid = np.zeros(n, dtype=bool)
    reached = np.zeros(n, dtype=bool)
    limits = np.array([e.max_steps for e in episodes], dtype=np.int64)
    rngs = None if greedy else [stream(seed, "rollout", i) for i in range(n)]
    t = 0
    while alive.any():
        idx = np.flatnonzero(alive & (t < limits))
        alive[alive & (t >= limits)] = False
        if len(idx) == 0:
            break
        cells = np.array([paths[i][-1] for i in idx])
        sg = np.array([subgoals[i][k[i]] for i in idx])
        conds = conditioner.z[conditioner.next[sg, cells]]
        logits = forward_batch(pad_histories([paths[i] for i in idx], window), conds, params)
        if greedy:
            acts = np.argmax(logits, axis=1)
        else:
            p = np.exp(log_softmax(logits))
            acts = np.array([rngs[i].choice(N_ACTIONS, p=p[j]) for j, i in enumerate(idx)])
        nxt = table[cells, acts]
        for j, i in enumerate(idx):
            if nxt[j] == INVALID:
                invalid[i] = True
                alive[i] = False
                continue
            paths[i].append(int(nxt[j]))
            if nxt[j] == subgoals[i][k[i]]:
                k[i] += 1
                if k[i] == len(subgoals[i]):
                    reached[i] = True
                    alive[i] = False
        t += 1
    return BatchRollout(paths, invalid, reached)


# ---------------------------------------------------------------- VPFT


@dataclass
class VpftCorpus:
    histories: np.ndarray  # (B, W) padded cell ids
    conds: np.ndarray  # (B, D)
    targets: np.ndarray  # (B,) action ids
    plausible: list[tuple[int, ...]] = field(default_factory=list)
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.targets)


def plausible_actions(world: GridWorld, cell: int, waypoint_dist: np.ndarray, k: int,
                      rng: np.random.Generator) -> list[int]:
    """Valid moves that do not increase the distance to the waypoint, capped at ``k``.

    When no move qualifies the set falls back to a repeat-free uniform draw
    of valid moves.
    """
    valid = [a for a in range(4) if step(world, cell, a) != INVALID]
    good = [a for a in valid if waypoint_dist[step(world, cell, a)] <= waypoint_dist[cell]]
    if not good and valid:
        good = [int(a) for a in rng.permutation(valid)]
    return good[:k]


def vpft_build(world: GridWorld, episodes, conditioner: Conditioner, k: int = 8, seed: int = 0,
               walks: int = 4, walk_len: int = 12, window: int = DEFAULT_WINDOW) -> VpftCorpus:
    """Targets for cells visited by seeded random walks from each episode start."""
    if k < 1:
        raise ParameterError(f"K must be >= 1, got {k}")
    hists, conds, targets, sets = [], [], [], []
    skipped = 0
    dist_cache: dict[int, np.ndarray] = {}
    for i, ep in enumerate(episodes):
        rng = stream(seed, "vpft", i)
        for _ in range(walks):
            history = [ep.start]
            for _ in range(walk_len):
                cell = history[-1]
                sg = int(rng.choice(ep.subgoals))
                valid = [a for a in range(4) if step(world, cell, a) != INVALID]
                if not valid:
                    skipped += 1
                    break
                if sg != cell:
                    wp = int(conditioner.next_cell(cell, sg))
                    if wp not in dist_cache:
                        dist_cache[wp] = bfs_distances(world, wp)
                    choice = plausible_actions(world, cell, dist_cache[wp], k, rng)
                    hists.append(history[-window:])
                    conds.append(conditioner.z[wp])
                    targets.append(int(rng.choice(choice)))
                    sets.append(tuple(choice))
                history.append(step(world, cell, int(rng.choice(valid))))
    if not targets:
        return VpftCorpus(np.zeros((0, 1), np.int64), np.zeros((0, conditioner.z.shape[1])),
                          np.zeros(0, np.int64), [], skipped)
    return VpftCorpus(pad_histories(hists, window), np.array(conds), np.array(targets), sets, skipped)


def nll_grad(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    lp = log_softmax(logits)
    b = len(targets)
    loss = -lp[np.arange(b), targets].mean()
    d = np.exp(lp)
    d[np.arange(b), targets] -= 1.0
    return float(loss), d / b


def vpft_loss(corpus: VpftCorpus, params: PolicyParams, grad: bool = True):
    """Mean negative log-likelihood of the targets, plus its parameter gradient."""
    if len(corpus) == 0:
        raise ParameterError("empty VPFT corpus")
    logits, cache = forward_batch(corpus.histories, corpus.conds, params, keep=True)
    loss, dlogits = nll_grad(logits, corpus.targets)
    if not grad:
        return loss
    return loss, backward_batch(dlogits, params, cache)


def vpft_train(corpus: VpftCorpus, params: PolicyParams, steps: int, lr: float = 0.5,
               batch: int | None = None, seed: int = 0) -> tuple[PolicyParams, list[float]]:
    """Plain SGD on the VPFT loss (full batch unless ``batch`` is given)."""
    params = params.copy()
    rng = stream(seed, "vpft-batches")
    losses = []
    n = len(corpus)
    for _ in range(steps):
        if batch is not None and batch < n:
            idx = rng.choice(n, size=batch, replace=False)
            sub = VpftCorpus(corpus.histories[idx], corpus.conds[idx], corpus.targets[idx])
        else:
            sub = corpus
        loss, g = vpft_loss(sub, params)
        losses.append(loss)
        params.axpy(-lr, g)
    return params, losses


def action_probs(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))

