"""Pure-Python/numpy reference kernels.

These mirror ``_ccore.pyx`` operation for operation so both backends return
bit-identical results. Neighbour codes use the bit order
E, NE, N, NW, W, SW, S, SE (bit 0 .. bit 7), with N meaning row - 1.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))


def _bits(code: int) -> list[int]:
    return [(code >> i) & 1 for i in range(8)]


def _ring_connected(x: list[int]) -> bool:
    """Set ring neighbours form one 8-connected group without the centre."""
    on = [k for k in range(8) if x[k]]
    if not on:
        return False
    seen, todo = {on[0]}, [on[0]]
    while todo:
        k = todo.pop()
        for j in on:
            if j not in seen and max(abs(_OFFSETS[k][0] - _OFFSETS[j][0]),
                                     abs(_OFFSETS[k][1] - _OFFSETS[j][1])) == 1:
                seen.add(j)
                todo.append(j)
    return len(seen) == len(on)


def build_luts() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Deletion tables for the two thinning subiterations and the cleanup passes.

    Returns ``(first, second, removable, breakable)``, each a uint8 array
    indexed by the 8-bit neighbour code. ``breakable`` marks pixels whose
    removal keeps the 8-connected component count but may open a hole.
    """
    first = np.zeros(256, dtype=np.uint8)
    second = np.zeros(256, dtype=np.uint8)
    removable = np.zeros(256, dtype=np.uint8)
    breakable = np.zeros(256, dtype=np.uint8)
    for code in range(256):
        x = _bits(code)
        # crossing number: 4-neighbour gaps followed by a set pixel
        crossing = sum(
            1 for k in (0, 2, 4, 6) if not x[k] and (x[k + 1] or x[(k + 2) % 8])
        )
        n1 = sum(1 for k in (1, 3, 5, 7) if x[k] or x[k - 1])
        n2 = sum(1 for k in (1, 3, 5, 7) if x[k] or x[(k + 1) % 8])
        g12 = crossing == 1 and 2 <= min(n1, n2) <= 3
        g3 = not ((x[1] or x[2] or not x[7]) and x[0])
        g3p = not ((x[5] or x[6] or not x[3]) and x[4])
        first[code] = g12 and g3
        second[code] = g12 and g3p
        # simple (8-connectivity number 1) and not an endpoint or isolated pixel
        removable[code] = crossing == 1 and sum(x) >= 2
        breakable[code] = sum(x) >= 2 and _ring_connected(x)
    return first, second, removable, breakable


FIRST_LUT, SECOND_LUT, REMOVABLE_LUT, BREAKABLE_LUT = build_luts()


def neighbour_codes(img: np.ndarray) -> np.ndarray:
    """Vectorised 8-bit neighbour code for every pixel (zero outside the image)."""
    h, w = img.shape
    p = np.pad(img.astype(np.int32), 1)
    code = np.zeros((h, w), dtype=np.int32)
    for bit, (dr, dc) in enumerate(_OFFSETS):
        code |= p[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w] << bit
    return code


def _local_code(img: np.ndarray, r: int, c: int, h: int, w: int) -> int:
    code = 0
    for bit, (dr, dc) in enumerate(_OFFSETS):
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w and img[rr, cc]:
            code |= 1 << bit
    return code


def _subiteration(img: np.ndarray, lut: np.ndarray) -> bool:
    delete = (img == 1) & (lut[neighbour_codes(img)] == 1)
    if not delete.any():
        return False
    img[delete] = 0
    return True


def _cleanup(img: np.ndarray) -> bool:
    h, w = img.shape
    changed = False
    for r in range(h):
        for c in range(w):
            if img[r, c] and REMOVABLE_LUT[_local_code(img, r, c, h, w)]:
                img[r, c] = 0
                changed = True
    return changed


def _break_blocks(img: np.ndarray) -> bool:
    """Remove one pixel of each 2x2 block that the topology-preserving passes kept.

    Only a pixel whose neighbours stay 8-connected without it is removed, so
    the component count is unchanged; an enclosed hole may open instead.
    """
    h, w = img.shape
    changed = False
    for r in range(h - 1):
        for c in range(w - 1):
            if not (img[r, c] and img[r, c + 1] and img[r + 1, c] and img[r + 1, c + 1]):
                continue
            for rr, cc in ((r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)):
                if BREAKABLE_LUT[_local_code(img, rr, cc, h, w)]:
                    img[rr, cc] = 0
                    changed = True
                    break
    return changed


def square_blocks(img: np.ndarray) -> list[tuple[int, int]]:
    """Top-left corners of all-ones 2x2 blocks in raster order."""
    b = img[:-1, :-1] & img[:-1, 1:] & img[1:, :-1] & img[1:, 1:]
    return [(int(r), int(c)) for r, c in zip(*np.nonzero(b))]


def _is_cut(img: np.ndarray, r: int, c: int) -> bool:
    """Removing (r, c) splits its 8-connected component."""
    h, w = img.shape
    nbrs = [(r + dr, c + dc) for dr, dc in _OFFSETS
            if 0 <= r + dr < h and 0 <= c + dc < w and img[r + dr, c + dc]]
    if len(nbrs) <= 1:
        return not nbrs
    img[r, c] = 0
    want, seen, todo = set(nbrs), {nbrs[0]}, [nbrs[0]]
    found = 1
    while todo and found < len(want):
        pr, pc = todo.pop()
        for dr, dc in _OFFSETS:
            q = (pr + dr, pc + dc)
            if 0 <= q[0] < h and 0 <= q[1] < w and img[q] and q not in seen:
                seen.add(q)
                todo.append(q)
                found += q in want
    img[r, c] = 1
    return found < len(want)


def break_blocks_global(img: np.ndarray) -> bool:
    """Remove the first non-cut pixel of the first reducible 2x2 block, in place."""
    for r, c in square_blocks(img):
        for rr, cc in ((r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)):
            if not _is_cut(img, rr, cc):
                img[rr, cc] = 0
                return True
    return False


def guo_hall(mask: np.ndarray) -> np.ndarray:
    """Two-subiteration parallel thinning only, iterated to a fixpoint."""
    img = np.ascontiguousarray(mask, dtype=np.uint8).copy()
    while _subiteration(img, FIRST_LUT) | _subiteration(img, SECOND_LUT):
        pass
    return img


def thin(mask: np.ndarray) -> np.ndarray:
    img = np.ascontiguousarray(mask, dtype=np.uint8).copy()
    while True:
        a = _subiteration(img, FIRST_LUT)
        b = _subiteration(img, SECOND_LUT)
        if a or b:
            continue
        if _cleanup(img) or _break_blocks(img):
            continue
        return img


def astar_csr(
    indptr: np.ndarray,
    indices: np.ndarray,
    cost: np.ndarray,
    xy: np.ndarray,
    start: int,
    goal: int,
    alpha: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """A* over a CSR adjacency with heuristic ``alpha * euclid(v, goal)``.

    Heap entries are ``(f, node)`` so equal priorities pop the lower node
    index first. Returns ``(g, prev_node, prev_edge, expanded)``.
    """
    n = len(indptr) - 1
    ptr = indptr.tolist()
    nbr = indices.tolist()
    w = cost.tolist()
    xs = xy[:, 0].tolist()
    ys = xy[:, 1].tolist()
    gx, gy = xs[goal], ys[goal]
    g = [math.inf] * n
    prev = [-1] * n
    prev_edge = [-1] * n
    closed = [False] * n
    g[start] = 0.0
    dx, dy = xs[start] - gx, ys[start] - gy
    heap = [(0.0 + alpha * math.sqrt(dx * dx + dy * dy), start)]
    expanded = 0
    while heap:
        _, u = heapq.heappop(heap)
        if closed[u]:
            continue
        closed[u] = True
        expanded += 1
        if u == goal:
            break
        gu = g[u]
        for e in range(ptr[u], ptr[u + 1]):
            v = nbr[e]
            ng = gu + w[e]
            if ng < g[v]:
                g[v] = ng
                prev[v] = u
                prev_edge[v] = e
                dx, dy = xs[v] - gx, ys[v] - gy
                heapq.heappush(heap, (ng + alpha * math.sqrt(dx * dx + dy * dy), v))
    return (
        np.array(g, dtype=np.float64),
        np.array(prev, dtype=np.int64),
        np.array(prev_edge, dtype=np.int64),
        expanded,
    )


def directed_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """``max_{p in a} min_{q in b} |p - q|`` for (n, 2) point arrays."""
    worst = 0.0
    for lo in range(0, len(a), 512):
        chunk = a[lo : lo + 512]
        diff = chunk[:, None, :] - b[None, :, :]
        d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]
        worst = max(worst, float(d2.min(axis=1).max()))
    return math.sqrt(worst)
