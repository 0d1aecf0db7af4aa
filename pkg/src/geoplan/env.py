"""Seeded grid-world navigation: worlds, moves, multi-stop episodes, local views."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .canvas import RasterTile, encode_tile
from .errors import GenerationError, ParameterError
from .rng import stream

UP, DOWN, LEFT, RIGHT, STAY = range(5)
ACTIONS = ("up", "down", "left", "right", "stay")
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
INVALID = -1

VIEW_RADIUS = 1
PIXELS_PER_CELL = 4


@dataclass(frozen=True)
class GridWorld:
    size: int
    blocked: frozenset[int]
    cell_meters: float = 10.0
    seed: int = 0

    @property
    def cells(self) -> int:
        return self.size * self.size

    def rc(self, cell: int) -> tuple[int, int]:
        return divmod(int(cell), self.size)

    def cell(self, r: int, c: int) -> int:
        return int(r) * self.size + int(c)

    def in_bounds(self, r: int, c: int) -> bool:
        return 0 <= r < self.size and 0 <= c < self.size

    def is_open(self, cell: int) -> bool:
        return 0 <= cell < self.cells and cell not in self.blocked

    def open_cells(self) -> list[int]:
        return [c for c in range(self.cells) if c not in self.blocked]

    def open_grid(self) -> np.ndarray:
        g = np.ones(self.cells, dtype=bool)
        g[list(self.blocked)] = False
        return g.reshape(self.size, self.size)

    def center(self, cell: int) -> tuple[float, float]:
        """World position (x east, y south) of a cell center in metres."""
        r, c = self.rc(cell)
        return ((c + 0.5) * self.cell_meters, (r + 0.5) * self.cell_meters)

    def cell_at(self, x: float, y: float) -> int | None:
        c = int(np.floor(x / self.cell_meters))
        r = int(np.floor(y / self.cell_meters))
        if not self.in_bounds(r, c):
            return None
        return self.cell(r, c)

    def to_json(self) -> dict:
        return {
            "size": self.size,
            "cellMeters": self.cell_meters,
            "blocked": [list(self.rc(b)) for b in sorted(self.blocked)],
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GridWorld":
        size = int(doc["size"])
        blocked = frozenset(int(r) * size + int(c) for r, c in doc["blocked"])
        return cls(size, blocked, float(doc.get("cellMeters", 10.0)), int(doc.get("seed", 0)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GridWorld":
        return cls.from_json(json.loads(Path(path).read_text()))


def step(world: GridWorld, cell: int, action: int) -> int:
    """Neighbour cell reached by ``action`` or INVALID (walls, edges, stay)."""
    if action not in (UP, DOWN, LEFT, RIGHT):
        return INVALID
    r, c = world.rc(cell)
    dr, dc = MOVES[action]
    rr, cc = r + dr, c + dc
    if not world.in_bounds(rr, cc):
        return INVALID
    nxt = world.cell(rr, cc)
    return INVALID if nxt in world.blocked else nxt


def transition_table(world: GridWorld) -> np.ndarray:
    """(cells, 5) table of step outcomes."""
    table = np.full((world.cells, 5), INVALID, dtype=np.int64)
    for cell in world.open_cells():
        for a in range(4):
            table[cell, a] = step(world, cell, a)
    return table


@lru_cache(maxsize=4096)
def bfs_distances(world: GridWorld, target: int) -> np.ndarray:
    """Hop distance of every cell to ``target``; -1 for blocked or unreachable.

    Results are cached per (world, target) and returned read-only.
    """
    dist = np.full(world.cells, -1, dtype=np.int64)
    if not world.is_open(target):
        dist.flags.writeable = False
        return dist
    dist[target] = 0
    queue = deque([target])
    while queue:
        u = queue.popleft()
        for a in range(4):
            v = step(world, u, a)
            if v != INVALID and dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    dist.flags.writeable = False
    return dist


def shortest_path(world: GridWorld, src: int, dst: int, dist: np.ndarray | None = None) -> list[int]:
    """Cells from src to dst inclusive, preferring moves in action order on ties."""
    dist = bfs_distances(world, dst) if dist is None else dist
    if dist[src] < 0:
        return []
    path = [src]
    while path[-1] != dst:
        path.append(next_cell(world, path[-1], dist))
    return path


def next_cell(world: GridWorld, cell: int, dist: np.ndarray) -> int:
    """First neighbour (in action order) one hop closer to the distance map's target."""
    for a in range(4):
        v = step(world, cell, a)
        if v != INVALID and dist[v] == dist[cell] - 1:
            return v
    return cell


def _connected(open_grid: np.ndarray) -> bool:
    cells = np.argwhere(open_grid)
    if len(cells) == 0:
        return False
    seen = np.zeros_like(open_grid)
    r, c = cells[0]
    seen[r, c] = True
    queue = deque([(r, c)])
    n = open_grid.shape[0]
    while queue:
        r, c = queue.popleft()
        for dr, dc in MOVES:
            rr, cc = r + dr, c + dc
            if 0 <= rr < n and 0 <= cc < n and open_grid[rr, cc] and not seen[rr, cc]:
                seen[rr, cc] = True
                queue.append((rr, cc))
    return bool(seen.sum() == open_grid.sum())


def generate_world(size: int, block_density: float, seed: int, cell_meters: float = 10.0,
                   max_tries: int = 1000) -> GridWorld:
    """Block ``round(density * size^2)`` random cells, resampling until the rest is connected."""
    if not 0 <= block_density < 0.5:
        raise ParameterError(f"block density must lie in [0, 0.5), got {block_density}")
    if size < 1:
        raise ParameterError(f"size must be positive, got {size}")
    rng = stream(seed, "world", size)
    count = int(round(block_density * size * size))
    for _ in range(max_tries):
        blocked = rng.choice(size * size, size=count, replace=False) if count else np.zeros(0, np.int64)
        grid = np.ones(size * size, dtype=bool)
        grid[blocked] = False
        if _connected(grid.reshape(size, size)):
            return GridWorld(size, frozenset(int(b) for b in blocked), float(cell_meters), int(seed))
    raise GenerationError(f"no connected world after {max_tries} resamples (size {size}, density {block_density})")


@dataclass(frozen=True)
class EpisodeSpec:
    start: int
    stops: tuple[int, ...]
    goal: int
    max_steps: int

    @property
    def subgoals(self) -> tuple[int, ...]:
        return self.stops + (self.goal,)

    def to_json(self, world: GridWorld) -> dict:
        return {
            "start": list(world.rc(self.start)),
            "stops": [list(world.rc(s)) for s in self.stops],
            "goal": list(world.rc(self.goal)),
            "maxSteps": self.max_steps,
        }

    @classmethod
    def from_json(cls, doc: dict, world: GridWorld) -> "EpisodeSpec":
        return cls(
            world.cell(*doc["start"]),
            tuple(world.cell(*s) for s in doc["stops"]),
            world.cell(*doc["goal"]),
            int(doc["maxSteps"]),
        )


def reference_path(world: GridWorld, ep: EpisodeSpec) -> list[int]:
    """Shortest cell path from start through every stop in order to the goal."""
    path = [ep.start]
    for target in ep.subgoals:
        leg = shortest_path(world, path[-1], target)
        if not leg:
            return []
        path.extend(leg[1:])
    return path


def sample_episodes(world: GridWorld, count: int, stop_count: int, seed: int,
                    step_factor: int = 4) -> list[EpisodeSpec]:
    if stop_count not in (1, 2, 3):
        raise ParameterError(f"stop count must be 1, 2 or 3, got {stop_count}")
    cells = np.array(world.open_cells(), dtype=np.int64)
    need = stop_count + 2
    if len(cells) < need:
        raise GenerationError(f"{len(cells)} open cells cannot host {need} distinct episode cells")
    out = []
    for i in range(count):
        rng = stream(seed, "episodes", stop_count, i)
        pick = [int(c) for c in rng.choice(cells, size=need, replace=False)]
        spec = EpisodeSpec(pick[0], tuple(pick[1:-1]), pick[-1], 0)
        hops = len(reference_path(world, spec)) - 1
        out.append(EpisodeSpec(spec.start, spec.stops, spec.goal, step_factor * hops))
    return out


def save_episodes(path: str | Path, world: GridWorld, episodes: list[EpisodeSpec]) -> None:
    Path(path).write_text(json.dumps([e.to_json(world) for e in episodes], indent=1) + "\n")


def load_episodes(path: str | Path, world: GridWorld) -> list[EpisodeSpec]:
    return [EpisodeSpec.from_json(d, world) for d in json.loads(Path(path).read_text())]


# ---------------------------------------------------------------- rendering


@dataclass
class StateObservation:
    cell: int
    view: RasterTile
    tokens: np.ndarray  # (patches, dim) encoder tokens of the view
    embedding: np.ndarray  # unit vector, flattened tokens


def render_view(world: GridWorld, cell: int, radius: int = VIEW_RADIUS, ppc: int = PIXELS_PER_CELL) -> RasterTile:
    """Local raster: blocked or off-grid 0, open 1, agent cell 0.5."""
    r0, c0 = world.rc(cell)
    k = 2 * radius + 1
    img = np.zeros((k, k), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            r, c = r0 + i - radius, c0 + j - radius
            if world.in_bounds(r, c) and world.cell(r, c) not in world.blocked:
                img[i, j] = 1.0
    img[radius, radius] = 0.5
    pix = np.kron(img, np.ones((ppc, ppc)))
    x, y = world.center(cell)
    res = world.cell_meters / ppc
    # pixel (0, 0) centre in world metres
    origin = (x - (k * ppc / 2 - 0.5) * res, y - (k * ppc / 2 - 0.5) * res)
    return RasterTile(pix, origin, res)


def observe(world: GridWorld, cell: int, encoder_seed: int, dim: int = 16,
            radius: int = VIEW_RADIUS, ppc: int = PIXELS_PER_CELL) -> StateObservation:
    if not world.is_open(cell):
        raise ParameterError(f"cell {world.rc(cell)} is blocked or outside the world")
    view = render_view(world, cell, radius, ppc)
    tokens = encode_tile(view, ppc, dim, encoder_seed).data.reshape(-1, dim)
    flat = tokens.ravel()
    return StateObservation(cell, view, tokens, flat / np.linalg.norm(flat))


def render_satellite(world: GridWorld, seed: int, ppc: int = PIXELS_PER_CELL, texture: float = 0.08) -> RasterTile:
    """Overhead canvas: dark blocked cells, bright open cells, per-cell seeded texture."""
    rng = stream(seed, "satellite-canvas", world.size)
    base = np.where(world.open_grid(), 0.8, 0.15)
    img = np.kron(base, np.ones((ppc, ppc)))
    img = img + rng.uniform(-texture, texture, size=img.shape)
    res = world.cell_meters / ppc
    return RasterTile(np.clip(img, 0.0, 1.0), (0.5 * res, 0.5 * res), res)
