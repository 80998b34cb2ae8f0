"""File formats: 8-bit PNG, float32 PFM, binary little-endian PLY."""

from __future__ import annotations

import numpy as np
import pytest

from panosplat.errors import ContractError
from panosplat.imageio import (
    read_pfm,
    read_ply_records,
    read_png,
    read_point_ply,
    write_pfm,
    write_ply_fields,
    write_png,
    write_point_ply,
)


def test_png_exact_on_quantized_values(tmp_path):
    img = np.arange(256).reshape(16, 16)[:, :, None].repeat(3, axis=2) / 255.0
    write_png(tmp_path / "a.png", img)
    np.testing.assert_array_equal(read_png(tmp_path / "a.png"), img)


def test_png_quantization_bound(tmp_path, rng):
    img = rng.uniform(size=(12, 20, 3))
    write_png(tmp_path / "a.png", img)
    assert np.abs(read_png(tmp_path / "a.png") - img).max() <= 0.5 / 255 + 1e-12


def test_pfm_round_trip_is_float32_exact(tmp_path, rng):
    m = rng.standard_normal((15, 9)).astype(np.float32).astype(np.float64)
    write_pfm(tmp_path / "m.pfm", m)
    np.testing.assert_array_equal(read_pfm(tmp_path / "m.pfm"), m)


def test_pfm_rejects_multichannel(tmp_path):
    with pytest.raises(ContractError):
        write_pfm(tmp_path / "m.pfm", np.zeros((4, 4, 3)))


def test_pfm_rejects_wrong_header(tmp_path):
    (tmp_path / "bad.pfm").write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
    with pytest.raises(ContractError):
        read_pfm(tmp_path / "bad.pfm")


def test_point_ply_round_trip(tmp_path, rng):
    pos = rng.standard_normal((50, 3))
    col = rng.uniform(size=(50, 3))
    write_point_ply(tmp_path / "p.ply", pos, col)
    rpos, rcol = read_point_ply(tmp_path / "p.ply")
    np.testing.assert_allclose(rpos, pos, atol=1e-6)  # float32 storage
    assert np.abs(rcol - col).max() <= 0.5 / 255 + 1e-9


def test_ply_fields_round_trip(tmp_path, rng):
    fields = {
        "x": rng.standard_normal(10),
        "y": rng.standard_normal(10),
        "z": rng.standard_normal(10),
        "opacity": rng.uniform(size=10),
    }
    write_ply_fields(tmp_path / "f.ply", fields)
    rec = read_ply_records(tmp_path / "f.ply")
    assert set(rec.dtype.names) == set(fields)
    for name, vals in fields.items():
        np.testing.assert_allclose(rec[name], vals, atol=1e-6)


def test_ply_header_errors(tmp_path):
    (tmp_path / "a.ply").write_bytes(b"obj\n")
    with pytest.raises(ContractError, match="not a PLY"):
        read_ply_records(tmp_path / "a.ply")
    (tmp_path / "b.ply").write_bytes(
        b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n"
    )
    with pytest.raises(ContractError, match="little-endian"):
        read_ply_records(tmp_path / "b.ply")
    (tmp_path / "c.ply").write_bytes(b"ply\nformat binary_little_endian 1.0\n")
    with pytest.raises(ContractError, match="truncated"):
        read_ply_records(tmp_path / "c.ply")
