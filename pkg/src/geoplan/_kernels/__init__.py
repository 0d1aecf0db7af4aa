"""Hot kernels with a compiled core and a pure-Python fallback.

The Cython extension ``_ccore`` is used when it imports; otherwise, or when
``GEOPLAN_PURE_PYTHON=1`` is set, the numpy/heapq versions in ``_pure`` are
used. Both produce identical results.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pure

try:
    from . import _ccore  # type: ignore[attr-defined]
except ImportError:  # extension not built
    _ccore = None

_FORCE_PURE = os.environ.get("GEOPLAN_PURE_PYTHON", "") not in ("", "0")

BACKEND = "cython" if (_ccore is not None and not _FORCE_PURE) else "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _ccore is not None else [])


def _thin_with(core):
    def thin(mask: np.ndarray) -> np.ndarray:
        # blocks kept by the local tests are broken with a global cut check;
        # what remains cannot lose a pixel without splitting a component
        out = core(mask)
        while _pure.square_blocks(out) and _pure.break_blocks_global(out):
            out = core(out)
        return out

    return thin


class _Backend:
    def __init__(self, name: str):
        self.name = name
        if name == "cython":
            if _ccore is None:
                raise ImportError("compiled kernels are not built")
            mod = _ccore
            luts = (_pure.FIRST_LUT, _pure.SECOND_LUT, _pure.REMOVABLE_LUT, _pure.BREAKABLE_LUT)
            self.thin = lambda mask: mod.thin(mask, *luts)
            self.guo_hall = lambda mask: mod.guo_hall(mask, *luts)
            self.astar_csr = lambda indptr, indices, cost, xy, s, g, a: mod.astar_csr(
                np.ascontiguousarray(indptr, dtype=np.int64),
                np.ascontiguousarray(indices, dtype=np.int64),
                np.ascontiguousarray(cost, dtype=np.float64),
                np.ascontiguousarray(xy, dtype=np.float64),
                int(s),
                int(g),
                float(a),
            )
            self.directed_hausdorff = lambda a, b: float(
                mod.directed_hausdorff(
                    np.ascontiguousarray(a, dtype=np.float64),
                    np.ascontiguousarray(b, dtype=np.float64),
                )
            )
        elif name == "python":
            self.thin = _pure.thin
            self.guo_hall = _pure.guo_hall
            self.astar_csr = _pure.astar_csr
            self.directed_hausdorff = lambda a, b: _pure.directed_hausdorff(
                np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
            )
        else:
            raise ValueError(f"unknown backend {name!r}")
        self.thin = _thin_with(self.thin)


def get_backend(name: str | None = None) -> _Backend:
    return _Backend(name or BACKEND)


_active = get_backend()
thin = _active.thin
guo_hall = _active.guo_hall
astar_csr = _active.astar_csr
directed_hausdorff = _active.directed_hausdorff
