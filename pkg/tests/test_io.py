import numpy as np
import pytest

from monosweep import io as msio
from monosweep.errors import ConfigError


def test_pfm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    depth = rng.uniform(400, 900, size=(13, 17)).astype(np.float32)
    path = tmp_path / "d.pfm"
    msio.write_pfm(path, depth)
    back = msio.read_pfm(path)
    assert back.shape == depth.shape
    assert np.array_equal(back, depth.astype(float))


def test_pfm_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.pfm"
    path.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
    with pytest.raises(ConfigError):
        msio.read_pfm(path)


def test_pfm_deterministic_bytes(tmp_path):
    depth = np.linspace(1, 2, 12).reshape(3, 4)
    a, b = tmp_path / "a.pfm", tmp_path / "b.pfm"
    msio.write_pfm(a, depth)
    msio.write_pfm(b, depth)
    assert a.read_bytes() == b.read_bytes()


def test_ppm_round_trip_gray(tmp_path):
    img = np.linspace(0, 1, 20).reshape(4, 5)
    path = tmp_path / "i.ppm"
    msio.write_ppm(path, img)
    back = msio.read_ppm(path)
    assert back.shape == (4, 5, 3)
    q = np.round(img * 255) / 255
    assert np.abs(msio.to_gray(back) - q).max() < 1e-6


def test_ppm_comment_and_p5(tmp_path):
    path = tmp_path / "g.pgm"
    path.write_bytes(b"P5\n# a comment\n2 2\n255\n" + bytes([0, 128, 255, 64]))
    img = msio.read_ppm(path)
    assert img.shape == (2, 2)
    assert img[0, 1] == pytest.approx(128 / 255)


def test_manifest_round_trip(tmp_path):
    path = tmp_path / "m.txt"
    entries = {"n_views": "3", "image_0": "a.ppm", "meta.kind": "plane"}
    msio.write_manifest(path, entries)
    assert msio.read_manifest(path) == entries


def test_manifest_rejects_garbage(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("just words\n")
    with pytest.raises(ConfigError):
        msio.read_manifest(path)
