"""Grid-world glue: encoders, policy training and episode evaluation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .canvas import Edge, Node, RasterTile, TopoGraph, encode_tile
from .crossview import AlignConfig, MixParams, RetrievalIndex, mix_forward_batch, retrieve, sgd_align
from .env import (
    ACTIONS,
    DOWN,
    INVALID,
    PIXELS_PER_CELL,
    RIGHT,
    VIEW_RADIUS,
    EpisodeSpec,
    GridWorld,
    generate_world,
    observe,
    reference_path,
    render_satellite,
    sample_episodes,
    step,
)
from .errors import NoPathError
from .grpo import GrpoConfig, UpdateRecord, train
from .planner import GraphIndex, PlanQuery, WaypointPath, astar, crop_patch, downsample
from .policy import (
    DEFAULT_WINDOW,
    N_ACTIONS,
    Conditioner,
    PolicyParams,
    forward_batch,
    log_softmax,
    pad_histories,
    rollout_many,
    vpft_build,
    vpft_train,
)
from .reward import ProgressMap, parse_transition, r_geo, r_prog, r_total
from .rng import stream


@dataclass
class EncoderConfig:
    token_dim: int = 16
    dim: int = 16
    stages: int = 2
    align_steps: int = 300
    lr: float = 0.05
    tau: float = 0.07


@dataclass
class Encoders:
    canvas: RasterTile
    satellite: MixParams
    ground: MixParams
    z_sat: np.ndarray  # (cells, dim) satellite embedding per cell, zero rows for blocked
    z_ground: np.ndarray  # (cells, dim) ground-view embedding per cell
    index: RetrievalIndex

    def conditioner(self, world: GridWorld) -> Conditioner:
        return Conditioner(world, self.z_sat)


def satellite_tokens(world: GridWorld, canvas: RasterTile, cell: int, seed: int, token_dim: int) -> np.ndarray:
    size = (2 * VIEW_RADIUS + 1) * PIXELS_PER_CELL
    patch = crop_patch(canvas, world.center(cell), size)
    return encode_tile(patch, PIXELS_PER_CELL, token_dim, seed).data.reshape(-1, token_dim)


def build_encoders(world: GridWorld, cfg: EncoderConfig | None = None) -> Encoders:
    """Frozen satellite aggregator plus a ground aggregator aligned to it on this world.

    Everything derives from ``world.seed`` so repeated calls agree exactly.
    """
    cfg = cfg or EncoderConfig()
    seed = world.seed
    canvas = render_satellite(world, seed)
    cells = world.open_cells()
    sat_tok = np.stack([satellite_tokens(world, canvas, c, seed, cfg.token_dim) for c in cells])
    gnd_tok = np.stack([observe(world, c, seed, cfg.token_dim).tokens for c in cells])
    tokens, n = sat_tok.shape[1:]
    sat = MixParams.init(tokens, n, cfg.dim, seed, cfg.stages, name="mix-satellite")
    gnd = MixParams.init(tokens, n, cfg.dim, seed, cfg.stages, name="mix-ground")
    acfg = AlignConfig(dim=cfg.dim, stages=cfg.stages, tau=cfg.tau, lr=cfg.lr, steps=cfg.align_steps,
                       batch=len(cells), seed=seed)
    res = sgd_align(gnd_tok, sat_tok, acfg, ground=gnd, satellite=sat, train_satellite=False)
    z_sat = np.zeros((world.cells, cfg.dim))
    z_gnd = np.zeros((world.cells, cfg.dim))
    z_sat[cells] = mix_forward_batch(sat_tok, sat)
    z_gnd[cells] = mix_forward_batch(gnd_tok, res.ground)
    index = RetrievalIndex(np.array(cells), z_sat[cells], np.array([world.center(c) for c in cells]))
    return Encoders(canvas, sat, res.ground, z_sat, z_gnd, index)


@dataclass
class PlanConfig:
    hidden: int = 64
    window: int = DEFAULT_WINDOW
    vpft_k: int = 8
    vpft_walks: int = 4
    vpft_walk_len: int = 12
    vpft_steps: int = 1000
    vpft_lr: float = 0.5
    vpft_batch: int = 256
    grpo: GrpoConfig = field(default_factory=GrpoConfig)


@dataclass
class TrainResult:
    params: PolicyParams
    vpft_params: PolicyParams
    vpft_losses: list[float]
    records: list[UpdateRecord]


def train_policy(world: GridWorld, episodes: list[EpisodeSpec], enc: Encoders, cfg: PlanConfig,
                 seed: int, trace=None) -> TrainResult:
    """Stage one supervised warm start on random-walk states, stage two GRPO."""
    cond = enc.conditioner(world)
    corpus = vpft_build(world, episodes, cond, cfg.vpft_k, seed, cfg.vpft_walks, cfg.vpft_walk_len, cfg.window)
    init = PolicyParams.init(world.cells, enc.z_sat.shape[1], cfg.hidden, seed)
    vparams, losses = vpft_train(corpus, init, cfg.vpft_steps, cfg.vpft_lr, cfg.vpft_batch, seed)
    gcfg = cfg.grpo
    if gcfg.window != cfg.window:
        gcfg = GrpoConfig(**{**gcfg.__dict__, "window": cfg.window})
    params, records = train(world, episodes, vparams, cond, enc.z_ground, gcfg, trace)
    return TrainResult(params, vparams, losses, records)


@dataclass
class EpisodeOutcome:
    cells: list[int]
    reference: list[int]
    success: bool
    invalid: bool
    reached: bool
    ts: float
    vcs: float


def evaluate_policy(world: GridWorld, episodes: list[EpisodeSpec], enc: Encoders, params: PolicyParams,
                    window: int = DEFAULT_WINDOW, densify: float | None = 1.0, vcs_m: int = 16,
                    threads: int = 1) -> list[EpisodeOutcome]:
    """Greedy rollouts scored with SR, TS and VCS per episode."""
    cond = enc.conditioner(world)
    roll = rollout_many(world, episodes, cond, params, greedy=True, window=window)
    road = metrics.RoadMask.from_world(world)

    def score(i: int) -> EpisodeOutcome:
        ep = episodes[i]
        cells = roll.paths[i]
        ref = reference_path(world, ep)
        gen_pts = np.array([world.center(c) for c in cells])
        ref_pts = np.array([world.center(c) for c in ref])
        goal = np.array(world.center(ep.goal))
        ok = bool(roll.reached[i]) and metrics.success(gen_pts, goal, road)
        ts = metrics.trajectory_similarity(gen_pts, ref_pts, densify=densify)
        vcs = metrics.visual_consistency(enc.z_ground[cells], enc.z_sat[cells], vcs_m)
        return EpisodeOutcome(cells, ref, ok, bool(roll.invalid[i]), bool(roll.reached[i]), ts, vcs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(score, range(len(episodes))))
    return [score(i) for i in range(len(episodes))]


def summarize(outcomes: list[EpisodeOutcome]) -> dict:
    ts = np.array([o.ts for o in outcomes])
    vcs = np.array([o.vcs for o in outcomes])
    return {
        "episodes": len(outcomes),
        "sr": float(np.mean([o.success for o in outcomes])),
        "ts_mean": float(ts.mean()),
        "ts_std": float(ts.std()),
        "vcs_mean": float(vcs.mean()),
        "vcs_std": float(vcs.std()),
    }


def localize(world: GridWorld, cell: int, enc: Encoders, k: int = 5) -> dict:
    """Retrieve satellite tiles for the ground view at ``cell``."""
    query = enc.z_ground[cell]
    hit = retrieve(query, enc.index, k)
    x, y = enc.index.position_of(hit.ids[0])
    return {"topK": hit.ids, "scores": hit.scores, "x": float(x), "y": float(y),
            "correct": bool(hit.ids[0] == cell)}


@dataclass
class PlanningRun:
    seed: int
    train: TrainResult
    sr: dict[int, float]
    ts: dict[int, float]


def planning_experiment(seed: int, cfg: PlanConfig, size: int = 8, density: float = 0.2,
                        train_episodes: int = 300, eval_episodes: int = 1000,
                        stop_counts=(1, 2, 3)) -> PlanningRun:
    """Train on a seeded world with mixed stop counts, then evaluate each stop count."""
    world = generate_world(size, density, seed)
    enc = build_encoders(world)
    per = max(1, train_episodes // len(stop_counts))
    eps = []
    for s in stop_counts:
        eps += sample_episodes(world, per, s, seed + 1000)
    result = train_policy(world, eps, enc, cfg, seed)
    sr, ts = {}, {}
    for s in stop_counts:
        test = sample_episodes(world, eval_episodes, s, seed + 2000)
        summ = summarize(evaluate_policy(world, test, enc, result.params, cfg.window))
        sr[s], ts[s] = summ["sr"], summ["ts_mean"]
    return PlanningRun(seed, result, sr, ts)


# ---------------------------------------------------------------- single episodes


def grid_graph(world: GridWorld) -> TopoGraph:
    """Open cells as nodes (id = cell id) joined to their open 4-neighbours by straight edges."""
    nodes = [Node(c, *world.center(c)) for c in world.open_cells()]
    edges = []
    for c in world.open_cells():
        for a in (DOWN, RIGHT):
            v = step(world, c, a)
            if v != INVALID:
                poly = np.array([world.center(c), world.center(v)])
                edges.append(Edge(len(edges), c, v, poly, world.cell_meters, 0.0))
    return TopoGraph(nodes, edges)


def plan_route(world: GridWorld, ep: EpisodeSpec, interval: float = 7.5) -> WaypointPath:
    """A* legs through every stop on the grid graph, concatenated."""
    gi = GraphIndex(grid_graph(world))
    nodes, edges, cost = [ep.start], [], 0.0
    for target in ep.subgoals:
        leg = astar(gi, PlanQuery(nodes[-1], target, 1.0, 0.0))
        nodes += leg.nodes[1:]
        edges += leg.edges
        cost += leg.cost
    path = WaypointPath(nodes, edges, cost)
    path.waypoints = downsample(path, gi, interval)
    return path


def _round(v: float) -> float:
    return round(float(v), 9)


def run_episode(world: GridWorld, ep: EpisodeSpec, enc: Encoders, params: PolicyParams | None,
                window: int = DEFAULT_WINDOW, beta: float = 0.5, greedy: bool = True, seed: int = 0,
                index: int = 0, interval: float = 7.5) -> dict:
    """Localize, plan and execute one episode, returning a JSON-ready record.

    ``params=None`` runs the planner's own route (oracle policy). Failures,
    including unreachable or blocked episode cells, are recorded rather than raised.
    """
    record = {
        "episode": index,
        "start": list(world.rc(ep.start)),
        "stops": [list(world.rc(s)) for s in ep.stops],
        "goal": list(world.rc(ep.goal)),
        "goalXY": [_round(v) for v in world.center(ep.goal)],
        "maxSteps": ep.max_steps,
    }
    bad = [c for c in (ep.start, *ep.subgoals) if not world.is_open(c)]
    if bad:
        record.update(cells=[record["start"]], points=[[_round(v) for v in world.center(ep.start)]],
                      steps=[], success=False, reached=False, invalid=False,
                      failure=f"episode cell {list(world.rc(bad[0]))} is blocked or outside the world")
        return record
    loc = localize(world, ep.start, enc, k=len(enc.index))
    record["localization"] = {
        "truth": int(ep.start), "ranked": loc["topK"], "x": _round(loc["x"]), "y": _round(loc["y"]),
        "correct": loc["correct"],
    }
    try:
        route = plan_route(world, ep, interval)
    except NoPathError as exc:
        record.update(cells=[record["start"]], points=[[_round(v) for v in world.center(ep.start)]],
                      steps=[], success=False, reached=False, invalid=False, failure=str(exc))
        return record
    record["plan"] = {"nodes": route.nodes, "cost": _round(route.cost),
                      "waypoints": [[_round(x), _round(y)] for x, y in route.waypoints]}
    cond = enc.conditioner(world)
    subgoals = list(ep.subgoals)
    k = 0
    history = [ep.start]
    steps = []
    rng = stream(seed, "episode", index)
    invalid = reached = False
    for t in range(ep.max_steps):
        cell = history[-1]
        sg = subgoals[k]
        nxt_plan = int(cond.next_cell(cell, sg))
        z_next = cond.z[nxt_plan]
        if params is None:
            a = next(a for a in range(4) if step(world, cell, a) == nxt_plan)
        else:
            logits = forward_batch(pad_histories([history], window), z_next[None], params)[0]
            p = np.exp(log_softmax(logits))
            a = int(np.argmax(logits)) if greedy else int(rng.choice(N_ACTIONS, p=p))
        nxt = step(world, cell, a)
        progress = ProgressMap.build(world, sg)
        cls = parse_transition(world, cell, nxt, progress)
        rp = r_prog(cls)
        rg = r_geo(enc.z_ground[nxt if nxt != INVALID else cell], z_next)
        steps.append({"t": t, "cell": list(world.rc(cell)), "action": ACTIONS[a],
                      "next": list(world.rc(nxt)) if nxt != INVALID else None, "class": cls.name,
                      "rProg": _round(rp), "rGeo": _round(rg), "rTotal": _round(r_total(rp, rg, beta))})
        if nxt == INVALID:
            invalid = True
            break
        history.append(nxt)
        if nxt == sg:
            k += 1
            if k == len(subgoals):
                reached = True
                break
    pts = np.array([world.center(c) for c in history])
    ok = reached and metrics.success(pts, world.center(ep.goal), metrics.RoadMask.from_world(world))
    record.update(
        cells=[list(world.rc(c)) for c in history],
        points=[[_round(x), _round(y)] for x, y in pts],
        steps=steps, success=bool(ok), reached=reached, invalid=invalid,
    )
    if not ok:
        record["failure"] = "invalid move" if invalid else ("step budget exhausted" if not reached else "off road")
    return record
