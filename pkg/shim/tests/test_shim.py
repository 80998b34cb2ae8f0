"""Shim conformance: the shared wire fixtures, the inpaint identity contract,
config validation, and the CLI."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from model_shim import ShimConfig, create_app
from model_shim import codec

FIXTURE_DIR = Path(__file__).resolve().parents[2] / "fixtures" / "wire"
FIXTURES = sorted(FIXTURE_DIR.glob("*.json"))


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(ShimConfig()))


def _run(client, fixture):
    req = fixture["request"]
    if req["method"] == "GET":
        return client.get(req["path"])
    return client.post(req["path"], json=req.get("json"))


@pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
def test_fixture_conformance(client, path):
    fixture = json.loads(path.read_text())
    if "server_config" in fixture:
        client = TestClient(create_app(ShimConfig(**fixture["server_config"])))
    resp = _run(client, fixture)
    expect = fixture["expect"]
    if "status" in expect:
        assert resp.status_code == expect["status"]
    if "status_min" in expect:
        assert resp.status_code >= expect["status_min"]
    body = resp.json()
    if expect.get("error"):
        assert "error" in body and isinstance(body["error"], str)
        return
    if "body" in expect:
        assert body == expect["body"]
    for key in expect.get("keys", ()):
        assert key in body
    if "map" in expect:
        m = codec.decode_pfm(body["map"])
        assert m.shape == (expect["map"]["height"], expect["map"]["width"])
        assert np.isfinite(m).all()
        if expect["map"].get("positive"):
            assert (m > 0).all()
    if "image" in expect:
        img = codec.decode_png(body["image"])
        assert img.shape[:2] == (expect["image"]["height"], expect["image"]["width"])
    if expect.get("unmasked_identity"):
        src = codec.decode_png(fixture["request"]["json"]["image"])
        mask = codec.decode_png(fixture["request"]["json"]["mask"]) >= 128
        out = codec.decode_png(body["image"])
        assert (out[~mask] == src[~mask]).all()
    if expect.get("echo_image"):
        src = codec.decode_png(fixture["request"]["json"]["image"])
        assert (codec.decode_png(body["image"]) == src).all()
    if expect.get("deterministic"):
        again = _run(client, fixture)
        assert again.json() == body


def test_fixture_suite_is_present():
    assert len(FIXTURES) >= 9
    names = {p.stem for p in FIXTURES}
    assert {"health", "disparity_gradient", "inpaint_center_hole",
            "generate_base", "error_oversize_image"} <= names


def test_inpaint_identity_random_images(client):
    rng = np.random.default_rng(0)
    for _ in range(3):
        img = (rng.uniform(0, 1, (12, 10, 3)) * 255).astype(np.uint8)
        mask = (rng.uniform(size=(12, 10)) > 0.6).astype(np.uint8) * 255
        resp = client.post("/v1/inpaint", json={
            "image": codec.encode_png(img), "mask": codec.encode_png(mask),
        })
        assert resp.status_code == 200
        out = codec.decode_png(resp.json()["image"])
        keep = mask < 128
        assert (out[keep] == img[keep]).all()


def test_inpaint_mask_mismatch_is_client_error(client):
    img = np.zeros((8, 8, 3), np.uint8)
    mask = np.zeros((4, 4), np.uint8)
    resp = client.post("/v1/inpaint", json={
        "image": codec.encode_png(img), "mask": codec.encode_png(mask),
    })
    assert resp.status_code == 400
    assert "mask dims" in resp.json()["error"]


def test_invalid_png_is_client_error(client):
    resp = client.post("/v1/disparity", json={"image": "bm90IGEgcG5n"})
    assert resp.status_code == 400
    assert "error" in resp.json()


def test_non_object_body_is_client_error(client):
    resp = client.post("/v1/disparity", json=[1, 2, 3])
    assert resp.status_code == 400


def test_generate_oversize_request_rejected():
    client = TestClient(create_app(ShimConfig(max_image_side=32)))
    resp = client.post("/v1/generate", json={
        "stage": "base", "prompt": "x", "width": 64, "height": 32,
    })
    assert resp.status_code == 413


def test_shim_config_validation():
    with pytest.raises(ValueError, match="unknown model"):
        ShimConfig(disparity_model="zoomorph")
    with pytest.raises(ValueError):
        ShimConfig(max_image_side=0)


def test_cli_overrides(monkeypatch, tmp_path):
    from click.testing import CliRunner

    from model_shim import cli

    captured = {}
    monkeypatch.setattr(cli, "serve", lambda cfg: captured.update(cfg=cfg))
    cfg_path = tmp_path / "shim.json"
    cfg_path.write_text(json.dumps({"port": 9000, "max_image_side": 512}))
    res = CliRunner().invoke(cli.main, ["--config", str(cfg_path), "--port", "9100"])
    assert res.exit_code == 0, res.output
    assert captured["cfg"].port == 9100
    assert captured["cfg"].max_image_side == 512

    cfg_path.write_text(json.dumps({"portt": 9000}))
    res = CliRunner().invoke(cli.main, ["--config", str(cfg_path)])
    assert res.exit_code != 0
    assert "unknown config keys" in res.output
