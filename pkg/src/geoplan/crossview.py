"""Cross-view embedding: residual MLP token aggregation, symmetric InfoNCE, retrieval."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, DimensionError, NumericError, ParameterError
from .rng import stream

TWO_PI = 2.0 * math.pi


@dataclass
class MixParams:
    """Per-stage residual MLP weights plus the output projection.

    Token blocks are (tokens, n); each stage maps every token row through
    ``w2 @ relu(w1 @ x) + x``. The projection acts on the flattened block.
    """

    w1: list[np.ndarray]  # (hidden, n) per stage
    w2: list[np.ndarray]  # (n, hidden) per stage
    proj: np.ndarray  # (dim, tokens * n)

    @property
    def stages(self) -> int:
        return len(self.w1)

    @property
    def token_len(self) -> int:
        if not self.w1:
            raise DimensionError("mix module needs at least one stage")
        return self.w1[0].shape[1]

    @property
    def tokens(self) -> int:
        return self.proj.shape[1] // self.token_len

    @property
    def dim(self) -> int:
        return self.proj.shape[0]

    @classmethod
    def init(
        cls,
        tokens: int,
        token_len: int,
        dim: int,
        seed: int,
        stages: int = 2,
        hidden: int | None = None,
        name: str = "mix",
        scale: float = 0.1,
    ) -> "MixParams":
        hidden = 4 * token_len if hidden is None else hidden
        rng = stream(seed, name, tokens, token_len, dim)
        w1 = [scale * rng.standard_normal((hidden, token_len)) / math.sqrt(token_len) for _ in range(stages)]
        w2 = [scale * rng.standard_normal((token_len, hidden)) / math.sqrt(hidden) for _ in range(stages)]
        proj = rng.standard_normal((dim, tokens * token_len)) / math.sqrt(tokens * token_len)
        return cls(w1, w2, proj)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (a, b) in enumerate(zip(self.w1, self.w2)):
            out[f"w1.{i}"] = a
            out[f"w2.{i}"] = b
        out["proj"] = self.proj
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], prefix: str = "") -> "MixParams":
        stages = sum(1 for k in arrays if k.startswith(prefix + "w1."))
        return cls(
            [np.asarray(arrays[f"{prefix}w1.{i}"]) for i in range(stages)],
            [np.asarray(arrays[f"{prefix}w2.{i}"]) for i in range(stages)],
            np.asarray(arrays[prefix + "proj"]),
        )

    def copy(self) -> "MixParams":
        return MixParams([a.copy() for a in self.w1], [b.copy() for b in self.w2], self.proj.copy())

    def zeros_like(self) -> "MixParams":
        return MixParams(
            [np.zeros_like(a) for a in self.w1], [np.zeros_like(b) for b in self.w2], np.zeros_like(self.proj)
        )

    def axpy(self, alpha: float, other: "MixParams") -> None:
        """In-place ``self += alpha * other``."""
        for a, b in zip(self.w1, other.w1):
            a += alpha * b
        for a, b in zip(self.w2, other.w2):
            a += alpha * b
        self.proj += alpha * other.proj


def _check_tokens(x: np.ndarray, params: MixParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = params.w1[0].shape[1]
    if x.ndim < 2 or x.shape[-1] != n or x.shape[-2] * n != params.proj.shape[1]:
        raise DimensionError(
            f"token block {x.shape[-2:]} does not match params "
            f"(tokens={params.proj.shape[1] // n}, n={n})"
        )
    for i, (a, b) in enumerate(zip(params.w1, params.w2)):
        if a.shape[1] != n or b.shape != (n, a.shape[0]):
            raise DimensionError(f"stage {i} weights have inconsistent shapes {a.shape}, {b.shape}")
    return x


def mix_forward_batch(x: np.ndarray, params: MixParams, keep: bool = False):
    """Embed a batch of token blocks (N, tokens, n) -> (N, dim) unit rows.

    With ``keep=True`` also returns the activation cache for :func:`mix_backward`.
    """
    x = _check_tokens(x, params)
    if x.ndim == 2:
        x = x[None]
    cache = []
    for w1, w2 in zip(params.w1, params.w2):
        pre = x @ w1.T
        h = np.maximum(pre, 0.0)
        cache.append((x, pre, h))
        x = h @ w2.T + x
    flat = x.reshape(x.shape[0], -1)
    y = flat @ params.proj.T
    norms = np.linalg.norm(y, axis=1)
    if np.any(norms <= 1e-300) or not np.all(np.isfinite(norms)):
        raise DegenerateInputError("mix module produced a zero or non-finite pre-normalization vector")
    z = y / norms[:, None]
    if keep:
        return z, (cache, flat, z, norms)
    return z


def mix_forward(tokens: np.ndarray, params: MixParams) -> np.ndarray:
    """Embed one (tokens, n) block into a unit vector."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2:
        raise DimensionError(f"expected a (tokens, n) block, got shape {tokens.shape}")
    return mix_forward_batch(tokens, params)[0]


def mix_backward(dz: np.ndarray, params: MixParams, cache) -> MixParams:
    """Parameter gradients given dL/dz for a cached batch forward."""
    stages, flat, z, norms = cache
    dz = np.asarray(dz, dtype=np.float64)
    dy = (dz - z * np.sum(z * dz, axis=1, keepdims=True)) / norms[:, None]
    grads = params.zeros_like()
    grads.proj = dy.T @ flat
    dx = (dy @ params.proj).reshape(stages[-1][0].shape)
    for i in range(len(stages) - 1, -1, -1):
        x, pre, h = stages[i]
        n, hid = params.w2[i].shape
        grads.w2[i] = dx.reshape(-1, n).T @ h.reshape(-1, hid)
        dpre = (dx @ params.w2[i]) * (pre > 0)
        grads.w1[i] = dpre.reshape(-1, hid).T @ x.reshape(-1, n)
        dx = dx + dpre @ params.w1[i]
    return grads


# ---------------------------------------------------------------- InfoNCE


def _unit(x: np.ndarray):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms <= 0):
        raise DegenerateInputError("zero embedding in batch")
    return x / norms, norms


def _logsoftmax_rows(s: np.ndarray) -> np.ndarray:
    m = s.max(axis=1, keepdims=True)
    return s - m - np.log(np.exp(s - m).sum(axis=1, keepdims=True))


def _info_nce(zg, zs, tau, literal, want_grad):
    if tau <= 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    zg = np.asarray(zg, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    if zg.shape != zs.shape or zg.ndim != 2 or zg.shape[0] < 1:
        raise DimensionError(f"ground {zg.shape} and satellite {zs.shape} batches must match")
    n = zg.shape[0]
    ug, ng = _unit(zg)
    us, ns = _unit(zs)
    cross = ug @ us.T / tau  # cross[i, j] = sim(g_i, s_j) / tau
    lp1 = _logsoftmax_rows(cross)
    if literal:
        # second direction: positive sim(s_i, g_i), denominator over sim(s_i, s_j)
        self_s = us @ us.T / tau
        lse2 = self_s.max(axis=1) + np.log(np.exp(self_s - self_s.max(axis=1, keepdims=True)).sum(axis=1))
        term2 = np.diag(cross) - lse2
    else:
        lp2 = _logsoftmax_rows(cross.T)
        term2 = np.diag(lp2)
    loss = -(np.diag(lp1).sum() + term2.sum()) / (2 * n)
    if not want_grad:
        return float(loss), None, None
    eye = np.eye(n)
    p1 = np.exp(lp1)
    # dL/dcross from the ground->satellite direction
    dcross = (p1 - eye) / (2 * n)
    dus = np.zeros_like(us)
    if literal:
        dcross -= eye / (2 * n)
        p2 = np.exp(self_s - lse2[:, None])
        dself = p2 / (2 * n)
        dus += (dself + dself.T) @ us / tau
    else:
        p2 = np.exp(lp2)
        dcross += (p2 - eye).T / (2 * n)
    dug = dcross @ us / tau
    dus += dcross.T @ ug / tau
    # back through the cosine normalization
    dg = (dug - ug * np.sum(ug * dug, axis=1, keepdims=True)) / ng
    ds = (dus - us * np.sum(us * dus, axis=1, keepdims=True)) / ns
    return float(loss), dg, ds


def info_nce_loss(zg: np.ndarray, zs: np.ndarray, tau: float = 0.07, literal: bool = False) -> float:
    """Symmetric cross-modal InfoNCE with positives on the diagonal.

    ``literal=True`` swaps the satellite->ground denominator for the
    satellite->satellite similarities.
    """
    return _info_nce(zg, zs, tau, literal, False)[0]


def info_nce_grad(
    zg: np.ndarray, zs: np.ndarray, tau: float = 0.07, literal: bool = False
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus its gradients with respect to the ground and satellite embeddings."""
    return _info_nce(zg, zs, tau, literal, True)


# ---------------------------------------------------------------- retrieval


@dataclass
class RetrievalIndex:
    ids: np.ndarray  # (M,) int tile ids, unique
    embeddings: np.ndarray  # (M, D) unit rows
    positions: np.ndarray  # (M, 2) world metres

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        if len(np.unique(self.ids)) != len(self.ids):
            raise ParameterError("tile ids must be unique")
        if not (len(self.ids) == len(self.embeddings) == len(self.positions)):
            raise DimensionError("ids, embeddings and positions must have equal length")
        if len(self.ids) and not np.allclose(np.linalg.norm(self.embeddings, axis=1), 1.0, atol=1e-6):
            raise ParameterError("index embeddings must be unit norm")

    def __len__(self) -> int:
        return len(self.ids)

    def position_of(self, tile_id: int) -> np.ndarray:
        return self.positions[int(np.flatnonzero(self.ids == tile_id)[0])]

    def to_json(self) -> list[dict]:
        return [
            {"tileId": int(i), "x": round(float(p[0]), 6), "y": round(float(p[1]), 6),
             "embedding": [float(v) for v in e]}
            for i, e, p in zip(self.ids, self.embeddings, self.positions)
        ]

    @classmethod
    def from_json(cls, doc: list[dict]) -> "RetrievalIndex":
        return cls(
            np.array([d["tileId"] for d in doc], dtype=np.int64),
            np.array([d["embedding"] for d in doc], dtype=np.float64),
            np.array([[d["x"], d["y"]] for d in doc], dtype=np.float64),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RetrievalIndex":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class Retrieval:
    ids: list[int]
    scores: list[float]
    clamped: bool = False


def retrieve(query: np.ndarray, index: RetrievalIndex, k: int) -> Retrieval:
    """Top-k tiles by cosine similarity; ties go to the smaller tile id."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise ParameterError("retrieval index is empty")
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn == 0:
        raise DegenerateInputError("zero query embedding")
    sims = index.embeddings @ (q / qn)
    order = np.lexsort((index.ids, -sims))
    clamped = k > len(index)
    top = order[: min(k, len(index))]
    return Retrieval([int(i) for i in index.ids[top]], [float(s) for s in sims[top]], clamped)


def refine_heading(ground_ring: np.ndarray, sat_ring: np.ndarray) -> float:
    """Heading (rad) maximizing the circular cosine correlation of two direction rings."""
    g = np.asarray(ground_ring, dtype=np.float64)
    s = np.asarray(sat_ring, dtype=np.float64)
    if g.shape != s.shape or g.ndim != 2:
        raise DimensionError(f"ring shapes differ: {g.shape} vs {s.shape}")
    r = g.shape[0]
    if r < 4:
        raise DimensionError(f"rings need at least 4 bins, got {r}")

    def unit(a):
        n = np.linalg.norm(a, axis=1, keepdims=True)
        return np.divide(a, n, out=np.zeros_like(a), where=n > 0)

    cos = unit(g) @ unit(s).T  # cos[r, q] = cos(g_r, s_q)
    rows = np.arange(r)
    scores = np.array([cos[rows, (rows + shift) % r].sum() for shift in range(r)])
    # argmax returns the first maximum, i.e. the smallest shift on ties
    best = int(np.argmax(np.round(scores, 12)))
    return TWO_PI * best / r


@dataclass
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        self.theta = float(self.theta) % TWO_PI
        if self.theta >= TWO_PI:  # float rounding of tiny negatives
            self.theta = 0.0


# ---------------------------------------------------------------- training


@dataclass
class AlignConfig:
    dim: int = 16
    stages: int = 2
    hidden: int | None = None
    tau: float = 0.07
    lr: float = 0.05
    steps: int = 2000
    batch: int = 128
    literal: bool = False
    seed: int = 0


@dataclass
class AlignResult:
    ground: MixParams
    satellite: MixParams
    losses: list[float] = field(default_factory=list)


def sgd_align(
    ground_tokens: np.ndarray,
    sat_tokens: np.ndarray,
    cfg: AlignConfig,
    ground: MixParams | None = None,
    satellite: MixParams | None = None,
    train_satellite: bool = True,
) -> AlignResult:
    """Plain minibatch SGD on the symmetric InfoNCE loss through both mix modules."""
    ground_tokens = np.asarray(ground_tokens, dtype=np.float64)
    sat_tokens = np.asarray(sat_tokens, dtype=np.float64)
    n, c, d = ground_tokens.shape
    if ground is None:
        ground = MixParams.init(c, d, cfg.dim, cfg.seed, cfg.stages, cfg.hidden, name="mix-ground")
    if satellite is None:
        sc, sd = sat_tokens.shape[1:]
        satellite = MixParams.init(sc, sd, cfg.dim, cfg.seed, cfg.stages, cfg.hidden, name="mix-satellite")
    ground, satellite = ground.copy(), satellite.copy()
    rng = stream(cfg.seed, "align-batches")
    losses = []
    batch = min(cfg.batch, n)
    for _ in range(cfg.steps):
        idx = rng.choice(n, size=batch, replace=False) if batch < n else np.arange(n)
        zg, cg = mix_forward_batch(ground_tokens[idx], ground, keep=True)
        zs, cs = mix_forward_batch(sat_tokens[idx], satellite, keep=True)
        loss, dg, ds = info_nce_grad(zg, zs, cfg.tau, cfg.literal)
        if not math.isfinite(loss):
            raise NumericError("alignment loss became non-finite")
        losses.append(loss)
        ground.axpy(-cfg.lr, mix_backward(dg, ground, cg))
        if train_satellite:
            satellite.axpy(-cfg.lr, mix_backward(ds, satellite, cs))
    return AlignResult(ground, satellite, losses)


def retrieval_topk(zq: np.ndarray, zdb: np.ndarray, ks=(1, 5, 10)) -> dict[int, float]:
    """Recall@k for row i of ``zq`` whose true match is row i of ``zdb``."""
    sims = zq @ zdb.T
    # rank of the true match: count of strictly better candidates plus equal ones with lower index
    diag = np.diag(sims)
    better = (sims > diag[:, None]).sum(axis=1)
    idx = np.arange(len(zq))
    ties = ((sims == diag[:, None]) & (idx[None, :] < idx[:, None])).sum(axis=1)
    rank = better + ties
    return {k: float(np.mean(rank < k)) for k in ks}
