"""Transition classes, progress/geometric rewards and group-normalized advantages."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import INVALID, GridWorld, bfs_distances, step
from .errors import DegenerateInputError, ParameterError

ALPHA_OPT = 1.0
ALPHA_NOPT = 0.0
ALPHA_INV = -5.0
BETA_GEO = 0.5


class Transition(enum.IntEnum):
    OPTIMAL = 0
    NON_OPTIMAL = 1
    INVALID = 2


_PROG = np.array([ALPHA_OPT, ALPHA_NOPT, ALPHA_INV])


@dataclass(frozen=True)
class ProgressMap:
    subgoal: int
    distances: np.ndarray  # hop count per cell, -1 where unreachable

    @classmethod
    def build(cls, world: GridWorld, subgoal: int) -> "ProgressMap":
        return cls(int(subgoal), bfs_distances(world, subgoal))


def parse_transition(world: GridWorld, src: int, dst: int, progress: ProgressMap) -> Transition:
    if dst == INVALID or not world.is_open(dst):
        return Transition.INVALID
    if dst not in [step(world, src, a) for a in range(4)]:
        return Transition.INVALID
    d = progress.distances
    if d[dst] == d[src] - 1:
        return Transition.OPTIMAL
    return Transition.NON_OPTIMAL


def classify(dist_from: np.ndarray, dist_to: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Vectorized transition classes for already-validated grid moves."""
    cls = np.where(dist_to == dist_from - 1, Transition.OPTIMAL, Transition.NON_OPTIMAL)
    return np.where(valid, cls, Transition.INVALID).astype(np.int64)


def r_prog(cls) -> float | np.ndarray:
    out = _PROG[np.asarray(cls, dtype=np.int64)]
    return float(out) if np.ndim(out) == 0 else out


def r_geo(predicted: np.ndarray, z_next: np.ndarray) -> float:
    """Cosine between the predicted view embedding and the next waypoint embedding."""
    a = np.asarray(predicted, dtype=np.float64)
    b = np.asarray(z_next, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateInputError("zero embedding in geometric reward")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def r_total(rp, rg, beta: float = BETA_GEO):
    return rp + beta * rg


def group_advantage(rewards) -> np.ndarray:
    """Normalize along the last axis with population std; flat groups map to zeros."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.shape[-1] < 2:
        raise ParameterError(f"group size must be >= 2, got {r.shape[-1]}")
    mean = r.mean(axis=-1, keepdims=True)
    std = r.std(axis=-1, keepdims=True)
    safe = np.where(std < 1e-12, 1.0, std)
    return np.where(std < 1e-12, 0.0, (r - mean) / safe)


@dataclass
class RewardBundle:
    cls: np.ndarray
    r_prog: np.ndarray
    r_geo: np.ndarray
    r_total: np.ndarray
    advantage: np.ndarray


TRACE_HEADER = ("episode", "step", "k", "class", "rProg", "rGeo", "rTotal", "advantage")


def write_reward_trace(path: str | Path, rows) -> None:
    """Rows are (episode, step, k, class, rProg, rGeo, rTotal, advantage)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for ep, st, k, c, rp, rg, rt, adv in rows:
            w.writerow([ep, st, k, Transition(c).name, f"{rp:.6f}", f"{rg:.6f}", f"{rt:.6f}", f"{adv:.6f}"])
