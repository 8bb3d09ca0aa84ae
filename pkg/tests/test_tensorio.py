"""Binary tensor format and PNG export."""

import numpy as np
import pytest

from peikit.tensorio import MAGIC, export_png, load_tensor, save_tensor


@pytest.mark.parametrize("shape", [(4,), (3, 5), (2, 3, 4), (2, 2, 2, 2)])
def test_roundtrip(tmp_path, shape):
    rng = np.random.default_rng(1)
    arr = rng.standard_normal(shape).astype(np.float32)
    path = tmp_path / "t.peit"
    save_tensor(path, arr)
    out = load_tensor(path)
    assert out.dtype == np.float32
    np.testing.assert_array_equal(out, arr)


def test_header_layout(tmp_path):
    path = tmp_path / "t.peit"
    save_tensor(path, np.zeros((2, 3), np.float32))
    blob = path.read_bytes()
    assert blob[:4] == MAGIC == b"PEIT"
    # version 1, rank 2, dims 2 and 3, then 6 little-endian float32 zeros
    assert blob[4:8] == b"\x01\x00\x02\x00"
    assert blob[8:16] == b"\x02\x00\x00\x00\x03\x00\x00\x00"
    assert len(blob) == 16 + 4 * 6


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "t.peit"
    save_tensor(path, np.zeros(3, np.float32))
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(ValueError, match="magic"):
        load_tensor(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.peit"
    save_tensor(path, np.zeros(4, np.float32))
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(ValueError, match="payload"):
        load_tensor(path)


def test_out_of_range_values_survive(tmp_path):
    # probe tensors are legitimately outside [0, 1]
    arr = np.array([[[-3.5], [7.25]]], np.float32)
    path = tmp_path / "probe.peit"
    save_tensor(path, arr)
    np.testing.assert_array_equal(load_tensor(path), arr)


def test_png_export_clamps(tmp_path):
    from PIL import Image

    img = np.zeros((4, 4, 3), np.float32)
    img[0, 0] = (-1.0, 0.5, 2.0)
    path = tmp_path / "img.png"
    export_png(path, img)
    loaded = np.asarray(Image.open(path))
    assert loaded.shape == (4, 4, 3)
    assert tuple(loaded[0, 0]) == (0, 128, 255)


def test_png_grayscale(tmp_path):
    from PIL import Image

    img = np.full((2, 2, 1), 0.5, np.float32)
    export_png(tmp_path / "g.png", img)
    loaded = np.asarray(Image.open(tmp_path / "g.png"))
    assert loaded.shape == (2, 2)
    assert loaded[0, 0] == 128
