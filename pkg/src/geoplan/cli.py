"""Command-line entry point: ``geoplan <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` (JSON, see README), ``--seed`` and
``--threads``; explicit flags override config values. JSON outputs are written
with sorted keys so reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import metrics
from .canvas import PrototypeSet, TopoGraph, extract_canvas
from .checkpoint import load_checkpoint, save_checkpoint
from .crossview import AlignConfig, info_nce_loss, mix_forward_batch, retrieval_topk, sgd_align
from .env import GridWorld, generate_world, load_episodes, sample_episodes
from .errors import GeoplanError, NoPathError
from .grpo import GrpoConfig, records_json, write_telemetry
from .pipeline import EncoderConfig, PlanConfig, build_encoders, run_episode, train_policy
from .planner import PlanQuery, plan
from .pnm import load_raster
from .policy import PolicyParams
from .reward import write_reward_trace
from .synthetic import paired_views, road_prototypes


class CliError(Exception):
    """User-facing failure; the message is printed and the exit status is 2."""


# ---------------------------------------------------------------- config plumbing


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise CliError(f"{p}: config must be a JSON object")
    return doc


OUTPUT_FLAGS = ("out", "metrics", "report", "telemetry", "trace", "summary")


def _place_outputs(args, cfg: dict) -> None:
    """Resolve relative output paths under the config's ``outputDir``."""
    base = cfg.get("outputDir")
    if not base:
        return
    names = OUTPUT_FLAGS + (("episodes",) if args.command == "make-world" else ())
    Path(base).mkdir(parents=True, exist_ok=True)
    for name in names:
        value = getattr(args, name, None)
        if value and not Path(value).is_absolute():
            setattr(args, name, str(Path(base) / value))


def _pick(flag, section: dict, key: str, default):
    """Flag value if given, else config value, else default."""
    if flag is not None:
        return flag
    return section.get(key, default)


def _seed(args, cfg: dict) -> int:
    seed = _pick(args.seed, cfg, "seed", None)
    if seed is None:
        raise CliError("a root seed is required (--seed or \"seed\" in the config file)")
    return int(seed)


def _threads(args, cfg: dict) -> int:
    t = args.threads
    if t is None:
        env = os.environ.get("GEOPLAN_THREADS")
        t = int(env) if env else cfg.get("threads", 1)
    if int(t) < 1:
        raise CliError(f"thread count must be positive, got {t}")
    return int(t)


def _require(path: str | None, what: str) -> Path:
    if path is None:
        raise CliError(f"missing {what} path")
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} file not found: {p}")
    return p


def _round_floats(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise CliError("refusing to write a non-finite value")
        return round(obj, 9)
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round_floats(obj.item())
    return obj


def dump_json(obj, path: str | Path | None) -> None:
    text = json.dumps(_round_floats(obj), indent=1, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_world(path: str | None) -> GridWorld:
    p = _require(path, "world")
    try:
        return GridWorld.load(p)
    except (KeyError, ValueError, TypeError) as exc:
        raise CliError(f"{p}: malformed world file ({exc})") from None


def _encoder_config(cfg: dict) -> EncoderConfig:
    e = cfg.get("encoder", {})
    return EncoderConfig(
        token_dim=int(e.get("tokenDim", 16)), dim=int(e.get("dim", 16)), stages=int(e.get("stages", 2)),
        align_steps=int(e.get("alignSteps", 300)), lr=float(e.get("lr", 0.05)), tau=float(e.get("tau", 0.07)),
    )


def _plan_config(args, cfg: dict, seed: int) -> PlanConfig:
    v = cfg.get("vpft", {})
    g = dict(cfg.get("grpo", {}))
    grpo = GrpoConfig(
        group_size=int(g.get("groupSize", 16)),
        clip=float(g.get("clip", 0.2)),
        kl_weight=float(g.get("klWeight", 0.01)),
        beta_geo=float(_pick(args.beta_geo, g, "betaGeo", 0.5)),
        lr=float(g.get("learningRate", 0.01)),
        updates=int(_pick(args.updates, g, "updates", 1000)),
        states=int(g.get("states", 64)),
        minibatches=int(g.get("minibatches", 4)),
        window=int(v.get("window", 4)),
        seed=seed,
    )
    return PlanConfig(
        hidden=int(v.get("hidden", 64)),
        window=int(v.get("window", 4)),
        vpft_k=int(v.get("k", 8)),
        vpft_walks=int(v.get("walks", 4)),
        vpft_walk_len=int(v.get("walkLen", 12)),
        vpft_steps=int(_pick(args.vpft_steps, v, "steps", 1000)),
        vpft_lr=float(v.get("lr", 0.5)),
        vpft_batch=int(v.get("batch", 256)),
        grpo=grpo,
    )


# ---------------------------------------------------------------- subcommands


def cmd_extract(args, cfg: dict) -> int:
    seed = _seed(args, cfg)
    enc = cfg.get("encoder", {})
    raster = _require(args.raster, "raster")
    tile = load_raster(raster)
    patch = int(_pick(args.patch_size, enc, "patchSize", 4))
    if args.protos is not None:
        pp = _require(args.protos, "prototype")
        protos = PrototypeSet.from_json(json.loads(pp.read_text()))
    else:
        protos = road_prototypes(patch, int(_pick(args.dim, enc, "dim", 16)), seed)
    if tile.height % patch or tile.width % patch:
        raise CliError(f"{raster}: size {tile.height}x{tile.width} is not a multiple of patch size {patch}")
    if np.ptp(tile.data) == 0:
        graph = TopoGraph([], [])
    else:
        _, _, graph = extract_canvas(tile, protos, patch, seed)
    dump_json(graph.to_json(), args.out)
    print(f"nodes {len(graph.nodes)} edges {len(graph.edges)}")
    return 0


def cmd_protos(args, cfg: dict) -> int:
    seed = _seed(args, cfg)
    enc = cfg.get("encoder", {})
    protos = road_prototypes(int(_pick(args.patch_size, enc, "patchSize", 4)),
                             int(_pick(args.dim, enc, "dim", 16)), seed)
    dump_json(protos.to_json(), args.out)
    return 0


def cmd_train_align(args, cfg: dict) -> int:
    seed = _seed(args, cfg)
    m = cfg.get("mix", {})
    pairs = int(_pick(args.pairs, m, "pairs", 1000))
    holdout = float(_pick(args.holdout, m, "holdout", 0.2))
    acfg = AlignConfig(
        dim=int(_pick(args.dim, m, "dim", 16)),
        stages=int(m.get("stages", 2)),
        tau=float(m.get("tau", 0.07)),
        lr=float(_pick(args.lr, m, "lr", 0.05)),
        steps=int(_pick(args.steps, m, "steps", 2000)),
        batch=int(m.get("batch", 128)),
        literal=bool(m.get("literal", False)),
        seed=seed,
    )
    pv = paired_views(pairs, seed, noise=float(m.get("noise", 0.1)))
    n_test = max(1, int(round(holdout * pairs)))
    if n_test >= pairs:
        raise CliError(f"holdout {holdout} leaves no training pairs")
    tr, te = slice(0, pairs - n_test), slice(pairs - n_test, pairs)
    res = sgd_align(pv.ground[tr], pv.satellite[tr], acfg)
    zq = mix_forward_batch(pv.ground[te], res.ground)
    zd = mix_forward_batch(pv.satellite[te], res.satellite)
    test_loss = info_nce_loss(zq, zd, acfg.tau, acfg.literal)
    if not math.isfinite(test_loss):
        raise CliError("held-out loss is non-finite")
    top = retrieval_topk(zq, zd, (1, 5, 10))
    arrays = {**{f"ground.{k}": v for k, v in res.ground.arrays().items()},
              **{f"satellite.{k}": v for k, v in res.satellite.arrays().items()}}
    save_checkpoint(args.out, arrays, seed, {"kind": "align", "config": asdict(acfg)})
    report = {
        "seed": seed, "pairs": pairs, "train": pairs - n_test, "test": n_test, "steps": acfg.steps,
        "top1": top[1], "top5": top[5], "top10": top[10],
        "lossInitial": res.losses[0] if res.losses else None,
        "lossFinal": res.losses[-1] if res.losses else None,
        "testLoss": test_loss,
    }
    dump_json(report, args.metrics)
    return 0


def cmd_make_world(args, cfg: dict) -> int:
    seed = _seed(args, cfg)
    w = cfg.get("world", {})
    world = generate_world(int(_pick(args.size, w, "size", 8)), float(_pick(args.density, w, "blockDensity", 0.2)),
                           seed, float(w.get("cellMeters", 10.0)))
    dump_json(world.to_json(), args.out)
    if args.episodes is not None:
        eps = sample_episodes(world, int(_pick(args.count, w, "episodes", 100)),
                              int(_pick(args.stops, w, "stops", 1)), seed)
        dump_json([e.to_json(world) for e in eps], args.episodes)
    return 0


def cmd_train_plan(args, cfg: dict) -> int:
    seed = _seed(args, cfg)
    world = _load_world(args.world)
    episodes = load_episodes(_require(args.episodes, "episodes"), world)
    if not episodes:
        raise CliError(f"{args.episodes}: no episodes")
    pcfg = _plan_config(args, cfg, seed)
    enc = build_encoders(world, _encoder_config(cfg))
    rows = [] if args.trace else None
    result = train_policy(world, episodes, enc, pcfg, seed, rows)
    meta = {"kind": "policy", "hidden": pcfg.hidden, "window": pcfg.window, "worldSeed": world.seed,
            "grpo": asdict(pcfg.grpo), "vpftSteps": pcfg.vpft_steps}
    save_checkpoint(args.out, result.params.arrays(), seed, meta)
    telemetry = args.telemetry or str(Path(args.out).with_suffix(".telemetry.csv"))
    write_telemetry(telemetry, result.records)
    if args.trace:
        write_reward_trace(args.trace, rows)
    summary = {
        "seed": seed, "episodes": len(episodes),
        "vpftLossInitial": result.vpft_losses[0] if result.vpft_losses else None,
        "vpftLossFinal": result.vpft_losses[-1] if result.vpft_losses else None,
        "updates": len(result.records),
        "last": records_json(result.records[-1:])[0] if result.records else None,
    }
    if args.summary:
        dump_json(summary, args.summary)
    return 0


def cmd_plan(args, cfg: dict) -> int:
    p = cfg.get("planner", {})
    graph = TopoGraph.load(_require(args.graph, "graph"))
    disabled = frozenset()
    if args.disable_edges:
        try:
            disabled = frozenset(int(e) for e in args.disable_edges.split(",") if e.strip())
        except ValueError:
            raise CliError(f"--disable-edges expects comma-separated edge ids, got {args.disable_edges!r}") from None
    q = PlanQuery(args.start, args.goal, float(_pick(args.alpha, p, "alpha", 1.0)),
                  float(_pick(args.beta, p, "beta", 0.5)), disabled)
    try:
        path = plan(graph, q, float(_pick(args.interval, p, "interval", 7.5)))
    except NoPathError as exc:
        raise CliError(str(exc)) from None
    dump_json({"nodes": path.nodes, "waypoints": path.waypoints.tolist(), "cost": path.cost}, args.out)
    return 0


def _load_policy(path: str | None) -> tuple[PolicyParams, dict]:
    p = _require(path, "policy")
    arrays, side = load_checkpoint(p)
    if side.get("meta", {}).get("kind") != "policy":
        raise CliError(f"{p}: not a policy checkpoint")
    return PolicyParams.from_arrays(arrays), side["meta"]


def cmd_episode(args, cfg: dict) -> int:
    seed = _seed(args, cfg)
    world = _load_world(args.world)
    episodes = load_episodes(_require(args.episodes, "episodes"), world)
    if args.oracle:
        params, window = None, 4
    else:
        params, meta = _load_policy(args.policy)
        window = int(meta.get("window", 4))
        if params.cells != world.cells:
            raise CliError(f"policy was trained for {params.cells} cells, world has {world.cells}")
    beta = float(_pick(args.beta_geo, cfg.get("grpo", {}), "betaGeo", 0.5))
    enc = build_encoders(world, _encoder_config(cfg))
    if args.index is not None:
        if not 0 <= args.index < len(episodes):
            raise CliError(f"episode index {args.index} out of range (0..{len(episodes) - 1})")
        picks = [args.index]
    else:
        picks = list(range(len(episodes)))
    runs = [run_episode(world, episodes[i], enc, params, window, beta, greedy=not args.sample, seed=seed, index=i)
            for i in picks]
    dump_json(runs[0] if args.index is not None else runs, args.out)
    return 0


def _as_runs(doc) -> list[dict]:
    return [doc] if isinstance(doc, dict) else list(doc)


def _footprint(world: GridWorld, rc) -> tuple[float, float, float, float]:
    """3x3-cell view footprint around a cell."""
    x, y = world.center(world.cell(*rc))
    h = 1.5 * world.cell_meters
    return (x - h, y - h, x + h, y + h)


def cmd_evaluate(args, cfg: dict) -> int:
    mcfg = cfg.get("metrics", {})
    world = _load_world(args.world)
    pred = _as_runs(json.loads(_require(args.pred, "prediction").read_text()))
    ref = _as_runs(json.loads(_require(args.ref, "reference").read_text()))
    if len(pred) != len(ref):
        raise CliError(f"{len(pred)} predicted runs but {len(ref)} references")
    if not pred:
        raise CliError("no runs to evaluate")
    threads = _threads(args, cfg)
    enc = build_encoders(world, _encoder_config(cfg))
    road = metrics.RoadMask.from_world(world)
    dens = mcfg.get("densify", 1.0)
    m = int(mcfg.get("vcsSamples", 16))
    radius = float(mcfg.get("successRadius", 5.0))

    ranked, overlaps = [], []
    for i, run in enumerate(pred):
        loc = run.get("localization")
        if loc is None:
            continue
        ranked.append(metrics.RankedResult(i, [int(c) for c in loc["ranked"]], int(loc["truth"])))
        top = world.rc(int(loc["ranked"][0]))
        overlaps.append(metrics.footprint_overlap(_footprint(world, world.rc(int(loc["truth"]))),
                                                  _footprint(world, top)))

    def score(i: int):
        gen = np.asarray(pred[i]["points"], dtype=np.float64).reshape(-1, 2)
        rp = np.asarray(ref[i]["points"], dtype=np.float64).reshape(-1, 2)
        goal = pred[i]["goalXY"]
        ok = bool(pred[i].get("reached", True)) and metrics.success(gen, goal, road, radius)
        ts = metrics.trajectory_similarity(gen, rp, densify=dens)
        cells = [world.cell_at(x, y) for x, y in gen]
        if any(c is None or not world.is_open(c) for c in cells):
            vcs = None
        else:
            vcs = metrics.visual_consistency(enc.z_ground[cells], enc.z_sat[cells], m)
        return ok, ts, vcs

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(score, range(len(pred))))
    else:
        scores = [score(i) for i in range(len(pred))]
    ts = np.array([s[1] for s in scores])
    vcs = [s[2] for s in scores if s[2] is not None]
    report = {
        "episodes": len(pred),
        "sr": float(np.mean([s[0] for s in scores])),
        "ts_mean": float(ts.mean()),
        "ts_std": float(ts.std()),
        "vcs_mean": float(np.mean(vcs)) if vcs else None,
        "top1": None, "top5": None, "top10": None, "top1pct": None, "ap": None, "hitRate": None,
    }
    if ranked:
        n_cand = len(ranked[0].ranked_ids)
        report.update(
            top1=metrics.topk_recall(ranked, 1),
            top5=metrics.topk_recall(ranked, 5),
            top10=metrics.topk_recall(ranked, 10),
            top1pct=metrics.topk_recall(ranked, metrics.top_percent_k(n_cand)),
            ap=metrics.average_precision(ranked),
            hitRate=metrics.hit_rate(ranked, overlaps, float(mcfg.get("hitThreshold", 0.5))),
        )
    dump_json(report, args.report)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "--cfg", dest="config", help="experiment config JSON (flags override it)")
    common.add_argument("--seed", type=int, help="root seed for all random streams")
    common.add_argument("--threads", type=int, help="worker cap (default: $GEOPLAN_THREADS or 1)")

    ap = argparse.ArgumentParser(prog="geoplan", description="Geo-consistent visual planning toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common], help="raster -> road graph JSON")
    p.add_argument("--raster", required=True, help="PGM/PPM raster (optional <stem>.hdr georeference)")
    p.add_argument("--protos", help="prototype JSON; default builds synthetic road prototypes")
    p.add_argument("--out", help="graph JSON path (default stdout)")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--dim", type=int)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("protos", parents=[common], help="write synthetic road prototypes JSON")
    p.add_argument("--out")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--dim", type=int)
    p.set_defaults(func=cmd_protos)

    p = sub.add_parser("train-align", parents=[common], help="train cross-view projections on paired views")
    p.add_argument("--out", required=True, help="checkpoint path (writes <out>.json sidecar)")
    p.add_argument("--metrics", help="held-out metrics JSON (default stdout)")
    p.add_argument("--pairs", type=int)
    p.add_argument("--holdout", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dim", type=int)
    p.set_defaults(func=cmd_train_align)

    p = sub.add_parser("make-world", parents=[common], help="generate a grid world and episodes")
    p.add_argument("--out", help="world JSON path (default stdout)")
    p.add_argument("--episodes", help="episode JSON path")
    p.add_argument("--size", type=int)
    p.add_argument("--density", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--stops", type=int)
    p.set_defaults(func=cmd_make_world)

    p = sub.add_parser("train-plan", parents=[common], help="VPFT warm start then GRPO")
    p.add_argument("--world", required=True)
    p.add_argument("--episodes", required=True)
    p.add_argument("--out", required=True, help="policy checkpoint path")
    p.add_argument("--telemetry", help="per-update CSV (default <out stem>.telemetry.csv)")
    p.add_argument("--trace", help="per-candidate reward trace CSV")
    p.add_argument("--summary", help="training summary JSON")
    p.add_argument("--updates", type=int)
    p.add_argument("--vpft-steps", type=int)
    p.add_argument("--beta-geo", type=float)
    p.set_defaults(func=cmd_train_plan)

    p = sub.add_parser("plan", parents=[common], help="A* over a road graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--start", type=int, required=True)
    p.add_argument("--goal", type=int, required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--interval", type=float)
    p.add_argument("--disable-edges", help="comma-separated edge ids to skip")
    p.add_argument("--out", help="plan JSON path (default stdout)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("episode", parents=[common], help="localize, plan and run the policy")
    p.add_argument("--world", required=True)
    p.add_argument("--episodes", required=True)
    p.add_argument("--policy", help="policy checkpoint")
    p.add_argument("--oracle", action="store_true", help="follow the planned route instead of a policy")
    p.add_argument("--index", type=int, help="run one episode (default: all)")
    p.add_argument("--sample", action="store_true", help="sample actions instead of greedy decoding")
    p.add_argument("--beta-geo", type=float)
    p.add_argument("--out", help="trajectory JSON path (default stdout)")
    p.set_defaults(func=cmd_episode)

    p = sub.add_parser("evaluate", parents=[common], help="score runs against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--report", help="report JSON path (default stdout)")
    p.set_defaults(func=cmd_evaluate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "episode" and not args.oracle and args.policy is None:
            raise CliError("episode needs --policy or --oracle")
        cfg = _load_config(args.config)
        _place_outputs(args, cfg)
        return int(args.func(args, cfg) or 0)
    except CliError as exc:
        print(f"geoplan {args.command}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"geoplan {args.command}: {exc}", file=sys.stderr)
        return 2
    except (GeoplanError, OSError, FloatingPointError) as exc:
        print(f"geoplan {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
