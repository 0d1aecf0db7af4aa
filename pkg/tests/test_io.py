from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from geoplan.canvas import RasterTile
from geoplan.checkpoint import load_checkpoint, save_checkpoint
from geoplan.errors import DataError, RasterFormatError
from geoplan.pnm import load_raster, read_header, read_pnm, save_raster, write_pnm


@pytest.mark.parametrize("shape", [(5, 7), (4, 6, 3)])
def test_pnm_matches_pillow(tmp_path, shape):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, shape).astype(np.float64) / 255
    path = tmp_path / "x.pnm"
    write_pnm(path, img)
    ref = np.asarray(Image.open(path), dtype=np.float64) / 255
    np.testing.assert_array_equal(ref, img)
    np.testing.assert_array_equal(read_pnm(path), img)


def test_pnm_16_bit_roundtrip(tmp_path):
    img = np.linspace(0, 1, 12).reshape(3, 4)
    write_pnm(tmp_path / "x.pgm", img, maxval=65535)
    np.testing.assert_allclose(read_pnm(tmp_path / "x.pgm"), img, atol=1 / 65535)


def test_pnm_comments_in_header(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# comment\n2 1\n# more\n255\n\x00\xff")
    np.testing.assert_array_equal(read_pnm(p), [[0.0, 1.0]])


@pytest.mark.parametrize("data, line", [
    (b"P2\n2 2\n255\n", 1),
    (b"P5\n2 x\n255\n", 2),
    (b"P5\n2 2\n\n-1\n", 4),
    (b"P5\n2 2\n", 3),
])
def test_pnm_header_errors_name_line(tmp_path, data, line):
    p = tmp_path / "bad.pgm"
    p.write_bytes(data)
    with pytest.raises(RasterFormatError, match=f"line {line}"):
        read_pnm(p)


def test_pnm_truncated(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n4 4\n255\n\x00")
    with pytest.raises(RasterFormatError, match="truncated"):
        read_pnm(p)


def test_raster_sidecar(tmp_path):
    tile = RasterTile(np.zeros((4, 4)), origin=(12.5, -3.0), resolution=0.25)
    save_raster(tmp_path / "r.pgm", tile)
    back = load_raster(tmp_path / "r.pgm")
    assert back.origin == (12.5, -3.0) and back.resolution == 0.25
    (tmp_path / "r.hdr").unlink()
    assert load_raster(tmp_path / "r.pgm").origin == (0.0, 0.0)
    with pytest.raises(FileNotFoundError, match="nope.pgm"):
        load_raster(tmp_path / "nope.pgm")


def test_header_errors(tmp_path):
    h = tmp_path / "h.hdr"
    h.write_text("# placement\n1 2\n")
    with pytest.raises(RasterFormatError, match="line 2"):
        read_header(h)
    h.write_text("1 2 0\n")
    with pytest.raises(RasterFormatError, match="line 1"):
        read_header(h)


def test_checkpoint_layout(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([-1.5])}
    save_checkpoint(tmp_path / "c.bin", arrays, seed=3, meta={"x": 1})
    raw = np.frombuffer((tmp_path / "c.bin").read_bytes(), dtype="<f8")
    np.testing.assert_array_equal(raw, [0, 1, 2, 3, 4, 5, -1.5])
    back, side = load_checkpoint(tmp_path / "c.bin")
    np.testing.assert_array_equal(back["a"], arrays["a"])
    assert side["meta"] == {"x": 1} and side["seed"] == 3


def test_checkpoint_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="missing.bin"):
        load_checkpoint(tmp_path / "missing.bin")
    save_checkpoint(tmp_path / "c.bin", {"a": np.zeros(4)}, seed=0)
    (tmp_path / "c.bin").write_bytes(b"\x00" * 8)
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "c.bin")
