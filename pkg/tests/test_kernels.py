from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage
from scipy.spatial.distance import directed_hausdorff as scipy_directed
from skimage.morphology import thin as skimage_thin

from geoplan import _kernels
from geoplan.canvas import has_square_block

BACKENDS = _kernels.available_backends()
EIGHT = np.ones((3, 3), dtype=int)

masks = arrays(np.uint8, st.tuples(st.integers(1, 18), st.integers(1, 18)), elements=st.integers(0, 1))


def components(img: np.ndarray) -> int:
    return ndimage.label(img, structure=EIGHT)[1]


@pytest.mark.parametrize("backend", BACKENDS)
def test_guo_hall_matches_skimage(backend):
    kb = _kernels.get_backend(backend)
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = (rng.random((24, 24)) < 0.6).astype(np.uint8)
        np.testing.assert_array_equal(kb.guo_hall(m), skimage_thin(m.astype(bool)).astype(np.uint8))


def irreducible_blocks(img: np.ndarray) -> bool:
    """Every 2x2 block pixel is a cut pixel: dropping it changes the component count."""
    base = components(img)
    for r, c in zip(*np.nonzero(img[:-1, :-1] & img[:-1, 1:] & img[1:, :-1] & img[1:, 1:])):
        for rr, cc in ((r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)):
            probe = img.copy()
            probe[rr, cc] = 0
            if components(probe) == base:
                return False
    return True


def x_shape(n: int = 8) -> np.ndarray:
    x = np.zeros((n, n), dtype=np.uint8)
    for i in range(n):
        x[i, i] = x[i, n - 1 - i] = 1
    x[n // 2 - 1 : n // 2 + 1, n // 2 - 1 : n // 2 + 1] = 1
    return x


@pytest.mark.parametrize("backend", BACKENDS)
@settings(max_examples=150, deadline=None)
@given(m=masks)
def test_thin_invariants(backend, m):
    out = _kernels.get_backend(backend).thin(m)
    assert not has_square_block(out) or irreducible_blocks(out)
    assert np.all(out <= m)
    assert components(out) == components(m)
    np.testing.assert_array_equal(_kernels.get_backend(backend).thin(out), out)


@pytest.mark.parametrize("backend", BACKENDS)
def test_block_between_pinholes_is_broken(backend):
    m = np.ones((12, 16), dtype=np.uint8)
    m[7, 9] = m[9, 7] = 0
    out = _kernels.get_backend(backend).thin(m)
    assert not has_square_block(out) and components(out) == 1


@pytest.mark.parametrize("backend", BACKENDS)
def test_x_core_is_irreducible(backend):
    x = x_shape()
    out = _kernels.get_backend(backend).thin(x)
    np.testing.assert_array_equal(out, x)
    assert has_square_block(out) and irreducible_blocks(out)


@pytest.mark.parametrize("backend", BACKENDS)
def test_x_core_closed_by_a_ring_is_reduced(backend):
    m = np.ones((10, 10), dtype=np.uint8)
    m[1:9, 1:9] = x_shape()
    out = _kernels.get_backend(backend).thin(m)
    assert not has_square_block(out) and components(out) == 1


@pytest.mark.parametrize("size", [2, 3])
def test_full_block_reduces_to_one_pixel(size):
    for backend in BACKENDS:
        out = _kernels.get_backend(backend).thin(np.ones((size, size), dtype=np.uint8))
        assert out.sum() == 1


@settings(max_examples=100, deadline=None)
@given(m=masks)
def test_backends_agree_on_thinning(m):
    outs = [_kernels.get_backend(b).thin(m) for b in BACKENDS]
    for o in outs[1:]:
        np.testing.assert_array_equal(o, outs[0])


def _random_csr(rng, n, m):
    src = rng.integers(0, n, m)
    dst = rng.integers(0, n, m)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    xy = rng.uniform(0, 100, (n, 2))
    cost = np.hypot(*(xy[src] - xy[dst]).T) + rng.uniform(0, 5, len(src))
    order = np.lexsort((dst, src))
    src, dst, cost = src[order], dst[order], cost[order]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=n))])
    return indptr, dst, cost, xy


def test_backends_agree_on_astar():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 40))
        indptr, dst, cost, xy = _random_csr(rng, n, 4 * n)
        s, g = (int(v) for v in rng.integers(0, n, 2))
        results = [_kernels.get_backend(b).astar_csr(indptr, dst, cost, xy, s, g, 1.0) for b in BACKENDS]
        for r in results[1:]:
            for a, b in zip(r[:3], results[0][:3]):
                np.testing.assert_array_equal(a, b)
            assert r[3] == results[0][3]


@pytest.mark.parametrize("backend", BACKENDS)
def test_directed_hausdorff_matches_scipy(backend):
    rng = np.random.default_rng(2)
    kb = _kernels.get_backend(backend)
    for _ in range(100):
        a = rng.normal(size=(int(rng.integers(1, 60)), 2))
        b = rng.normal(size=(int(rng.integers(1, 60)), 2))
        assert kb.directed_hausdorff(a, b) == pytest.approx(scipy_directed(a, b)[0], abs=1e-12)


def test_pure_python_switch(monkeypatch):
    import importlib

    monkeypatch.setenv("GEOPLAN_PURE_PYTHON", "1")
    mod = importlib.reload(_kernels)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("GEOPLAN_PURE_PYTHON")
        importlib.reload(_kernels)


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")
