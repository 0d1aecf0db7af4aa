"""Time the compiled and pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from geoplan._kernels import available_backends, get_backend
from geoplan.canvas import Edge, Node, TopoGraph
from geoplan.planner import GraphIndex
from geoplan.synthetic import render_road_scene


def _blob(size: int, seed: int) -> np.ndarray:
    return render_road_scene("cross", seed=seed, size=size).road.astype(np.uint8)


def _graph(n: int, seed: int) -> GraphIndex:
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 1000, (n, 2))
    nodes = [Node(i, float(x), float(y)) for i, (x, y) in enumerate(xy)]
    edges = []
    for i in range(3 * n):
        a, b = (int(v) for v in rng.choice(n, 2, replace=False))
        edges.append(Edge(i, a, b, xy[[a, b]], float(np.hypot(*(xy[a] - xy[b]))), float(rng.uniform(0, 1))))
    return GraphIndex(TopoGraph(nodes, edges))


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    mask = _blob(256, 0)
    gi = _graph(5000, 1)
    pairs = np.random.default_rng(2).choice(5000, (20, 2))
    pts_a = np.random.default_rng(3).normal(size=(2000, 2))
    pts_b = np.random.default_rng(4).normal(size=(2000, 2))

    indptr, indices, cost, _ = gi.csr(1.0, 0.5)
    cases = {
        "thin 256x256": lambda k: k.thin(mask),
        "astar_csr 5000 nodes x20": lambda k: [
            k.astar_csr(indptr, indices, cost, gi.xy, s, g, 1.0) for s, g in pairs
        ],
        "directed_hausdorff 2000x2000": lambda k: k.directed_hausdorff(pts_a, pts_b),
    }
    names = available_backends()
    print(f"{'kernel':32s}" + "".join(f"{n:>12s}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for label, fn in cases.items():
        row = {n: _best(lambda: fn(get_backend(n)), args.repeat) for n in names}
        line = f"{label:32s}" + "".join(f"{row[n] * 1e3:10.2f}ms" for n in names)
        if "cython" in row:
            line += f"   {row['python'] / row['cython']:7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
