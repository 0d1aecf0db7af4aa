"""Group-relative policy optimization with a clipped surrogate and exact KL anchor."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .env import INVALID, GridWorld, reference_path, transition_table
from .errors import DivergenceError, NumericError, ParameterError
from .policy import (
    DEFAULT_WINDOW,
    N_ACTIONS,
    Conditioner,
    PolicyParams,
    backward_batch,
    forward_batch,
    log_softmax,
    pad_histories,
)
from .reward import BETA_GEO, classify, group_advantage, r_prog
from .rng import stream

LOGIT_LIMIT = 50.0


@dataclass
class GrpoConfig:
    group_size: int = 16
    clip: float = 0.2
    kl_weight: float = 0.01
    beta_geo: float = BETA_GEO
    lr: float = 0.01
    updates: int = 1000
    states: int = 64
    minibatches: int = 4
    window: int = DEFAULT_WINDOW
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 2:
            raise ParameterError(f"group size must be >= 2, got {self.group_size}")
        if not 0 < self.clip < 1:
            raise ParameterError(f"clip must lie in (0, 1), got {self.clip}")
        if self.kl_weight < 0:
            raise ParameterError(f"KL weight must be >= 0, got {self.kl_weight}")
        if self.states < 1 or self.minibatches < 1:
            raise ParameterError("states and minibatches must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "GrpoConfig":
        known = {k: doc[k] for k in cls.__dataclass_fields__ if k in doc}
        return cls(**known)


@dataclass
class UpdateRecord:
    update: int
    mean_reward: float
    objective: float
    kl: float
    clipped_fraction: float


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite log-probabilities or advantages")


def grpo_objective(old_lp, new_lp, adv, kl: float, cfg: GrpoConfig) -> float:
    """mean_k min(rho*A, clip(rho, 1-eps, 1+eps)*A) - gamma*kl."""
    old_lp, new_lp, adv = (np.asarray(v, dtype=np.float64) for v in (old_lp, new_lp, adv))
    if not old_lp.shape == new_lp.shape == adv.shape:
        raise ParameterError("log-prob and advantage arrays must have equal length")
    _check_finite(old_lp, new_lp, adv)
    rho = np.exp(new_lp - old_lp)
    surr = np.minimum(rho * adv, np.clip(rho, 1 - cfg.clip, 1 + cfg.clip) * adv)
    return float(surr.mean() - cfg.kl_weight * kl)


def surrogate_grad(old_lp, new_lp, adv, clip: float) -> np.ndarray:
    """d(mean clipped surrogate)/d(new_lp); zero wherever the clipped branch is the minimum."""
    old_lp, new_lp, adv = (np.asarray(v, dtype=np.float64) for v in (old_lp, new_lp, adv))
    rho = np.exp(new_lp - old_lp)
    clipped = np.clip(rho, 1 - clip, 1 + clip) * adv
    active = rho * adv <= clipped
    return np.where(active, rho * adv, 0.0) / rho.size


def categorical_kl(logits_p: np.ndarray, logits_q: np.ndarray) -> np.ndarray:
    """Per-row KL(p || q) of two softmax distributions."""
    lp, lq = log_softmax(logits_p), log_softmax(logits_q)
    return np.sum(np.exp(lp) * (lp - lq), axis=-1)


def kl_logit_grad(logits_p: np.ndarray, logits_q: np.ndarray) -> np.ndarray:
    """d KL(p || q) / d logits_p per row."""
    lp, lq = log_softmax(logits_p), log_softmax(logits_q)
    p = np.exp(lp)
    kl = np.sum(p * (lp - lq), axis=-1, keepdims=True)
    return p * (lp - lq - kl)


def kl_estimate(params: PolicyParams, ref: PolicyParams, histories, conds, window=DEFAULT_WINDOW) -> float:
    """Exact categorical KL(pi_theta || pi_ref) averaged over states."""
    hist = histories if isinstance(histories, np.ndarray) else pad_histories(histories, window)
    conds = np.asarray(conds, dtype=np.float64)
    kl = categorical_kl(forward_batch(hist, conds, params), forward_batch(hist, conds, ref))
    return float(max(kl.mean(), 0.0))


@dataclass
class StatePool:
    """On-path states of reference routes: padded histories, cells and active subgoals."""

    histories: np.ndarray
    cells: np.ndarray
    subgoals: np.ndarray

    @classmethod
    def from_episodes(cls, world: GridWorld, episodes, window: int = DEFAULT_WINDOW) -> "StatePool":
        hists, cells, sgs = [], [], []
        for ep in episodes:
            path = reference_path(world, ep)
            k = 0
            targets = ep.subgoals
            for t, cell in enumerate(path[:-1]):
                if cell == targets[k]:
                    k += 1
                hists.append(path[max(0, t + 1 - window): t + 1])
                cells.append(cell)
                sgs.append(targets[k])
        if not cells:
            raise ParameterError("episodes yield no on-path training states")
        return cls(pad_histories(hists, window), np.array(cells), np.array(sgs))

    def __len__(self) -> int:
        return len(self.cells)


def _policy_grad(params, hist, conds, acts, old_lp, adv, ref_logits, cfg):
    """Objective value, gradient, KL and clipped fraction for one minibatch."""
    logits, cache = forward_batch(hist, conds, params, keep=True)
    lp = log_softmax(logits)
    b, g = acts.shape
    new_lp = lp[np.arange(b)[:, None], acts]
    kl_rows = categorical_kl(logits, ref_logits)
    kl = float(kl_rows.mean())
    obj = grpo_objective(old_lp.ravel(), new_lp.ravel(), adv.ravel(), kl, cfg)
    w = surrogate_grad(old_lp.ravel(), new_lp.ravel(), adv.ravel(), cfg.clip).reshape(b, g)
    # d log pi(a) / d logits = onehot(a) - p
    dlogits = -w.sum(axis=1, keepdims=True) * np.exp(lp)
    np.add.at(dlogits, (np.repeat(np.arange(b), g), acts.ravel()), w.ravel())
    dlogits -= cfg.kl_weight * kl_logit_grad(logits, ref_logits) / b
    rho = np.exp(new_lp - old_lp)
    clipped = float(np.mean((rho < 1 - cfg.clip) | (rho > 1 + cfg.clip)))
    return obj, backward_batch(dlogits, params, cache), kl, clipped, logits


def train(world: GridWorld, episodes, policy_init: PolicyParams, conditioner: Conditioner,
          ground_embeddings: np.ndarray, cfg: GrpoConfig, trace=None):
    """GRPO refinement from ``policy_init``, which also serves as the fixed reference policy.

    ``ground_embeddings[c]`` is the ground-view embedding of cell ``c``; the
    geometric reward compares it with the conditioning embedding. ``trace``,
    when given, receives (update, state, k, class, rProg, rGeo, rTotal, adv) rows.
    """
    ref = policy_init.copy()
    params = policy_init.copy()
    pool = StatePool.from_episodes(world, episodes, cfg.window)
    table = transition_table(world)
    records = []
    G = cfg.group_size
    for u in range(cfg.updates):
        rng = stream(cfg.seed, "grpo", u)
        pick = rng.choice(len(pool), size=min(cfg.states, len(pool)), replace=False)
        hist, cells, sgs = pool.histories[pick], pool.cells[pick], pool.subgoals[pick]
        nxt_plan = conditioner.next[sgs, cells]
        conds = conditioner.z[nxt_plan]
        old_logits = forward_batch(hist, conds, params)
        if np.mean(np.abs(old_logits)) > LOGIT_LIMIT:
            raise DivergenceError(f"mean |logit| exceeded {LOGIT_LIMIT} at update {u}")
        old_all = log_softmax(old_logits)
        probs = np.exp(old_all)
        cum = np.cumsum(probs, axis=1)
        draws = rng.random((len(pick), G))
        acts = np.minimum((draws[:, :, None] > cum[:, None, :]).sum(axis=2), N_ACTIONS - 1)
        old_lp = np.take_along_axis(old_all, acts, axis=1)
        # score the candidates
        nxt = table[cells[:, None], acts]
        valid = nxt != INVALID
        landed = np.where(valid, nxt, cells[:, None])
        dist = conditioner.dist[sgs]
        d_from = dist[np.arange(len(pick)), cells][:, None]
        d_to = np.take_along_axis(dist, landed, axis=1)
        cls = classify(d_from, d_to, valid)
        rp = r_prog(cls)
        rg = np.clip(np.einsum("bgd,bd->bg", ground_embeddings[landed], conds), -1.0, 1.0)
        rt = rp + cfg.beta_geo * rg
        adv = group_advantage(rt)
        if trace is not None:
            for i in range(len(pick)):
                for k in range(G):
                    trace.append((u, int(pick[i]), k, int(cls[i, k]), rp[i, k], rg[i, k], rt[i, k], adv[i, k]))
        ref_logits = forward_batch(hist, conds, ref)
        objs, kls, clips = [], [], []
        for chunk in np.array_split(np.arange(len(pick)), cfg.minibatches):
            if len(chunk) == 0:
                continue
            obj, grad, kl, clipped, _ = _policy_grad(
                params, hist[chunk], conds[chunk], acts[chunk], old_lp[chunk], adv[chunk],
                ref_logits[chunk], cfg,
            )
            params.axpy(cfg.lr, grad)
            objs.append(obj)
            kls.append(kl)
            clips.append(clipped)
        if not params.all_finite():
            raise DivergenceError(f"non-finite policy parameters at update {u}")
        records.append(UpdateRecord(u, float(rt.mean()), float(np.mean(objs)), float(np.mean(kls)),
                                    float(np.mean(clips))))
    return params, records


TELEMETRY_HEADER = ("update", "meanRTotal", "objective", "kl", "clippedFraction")


def write_telemetry(path: str | Path, records: list[UpdateRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TELEMETRY_HEADER)
        for r in records:
            w.writerow([r.update, f"{r.mean_reward:.6f}", f"{r.objective:.6f}", f"{r.kl:.6f}",
                        f"{r.clipped_fraction:.6f}"])


def records_json(records: list[UpdateRecord]) -> list[dict]:
    return [{k: (round(v, 9) if isinstance(v, float) and math.isfinite(v) else v)
             for k, v in asdict(r).items()} for r in records]
