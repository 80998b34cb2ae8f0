"""Pipeline configuration: defaults, desk-scale preset, JSON round trip."""

from __future__ import annotations


import pytest

from panosplat.config import (
    PipelineConfig,
    PointCloudConfig,
    config_from_dict,
    config_to_dict,
    desk_scale,
    load_config,
    save_config,
)
from panosplat.errors import ConfigurationError
from panosplat.geometry import PanoDims


def test_defaults():
    cfg = PipelineConfig()
    assert cfg.depth.working_dims == PanoDims(4096, 2048)
    assert cfg.pointcloud.source_dims == PanoDims(2048, 1024)
    assert cfg.pointcloud.sparse_dims == PanoDims(1024, 512)
    assert cfg.pointcloud.gradient_threshold == 0.4
    assert cfg.rig.n_base == 38 and cfg.rig.n_supp_per_base == 4
    assert cfg.schedule.pre_pcd_iters == 2000
    assert cfg.schedule.transfer_iters == 5000
    assert set(cfg.adapters) == {"generator", "depth", "metric_depth", "inpaint"}
    assert all(ep.transport == "stub" for ep in cfg.adapters.values())


def test_desk_scale_preset():
    cfg = desk_scale(PipelineConfig())
    assert cfg.ladder.detailed_dims == PanoDims(512, 256)
    assert cfg.depth.working_dims == PanoDims(512, 256)
    assert cfg.depth.face_res == 64
    assert cfg.pointcloud.source_dims == PanoDims(256, 128)
    assert cfg.pointcloud.sparse_dims == PanoDims(128, 64)
    assert cfg.rig.image_size == 128
    assert (cfg.schedule.pre_pcd_iters, cfg.schedule.pre_pano_iters,
            cfg.schedule.transfer_iters) == (400, 400, 1000)
    # untouched sections keep their values
    assert cfg.schedule.densify_interval == 100
    assert cfg.pointcloud.gradient_threshold == 0.4


def test_dict_round_trip():
    cfg = desk_scale(PipelineConfig())
    again = config_from_dict(config_to_dict(cfg))
    assert config_to_dict(again) == config_to_dict(cfg)


def test_json_file_round_trip(tmp_path):
    cfg = PipelineConfig(seed=7, output_dir="results")
    save_config(cfg, tmp_path / "c.json")
    again = load_config(tmp_path / "c.json")
    assert again.seed == 7 and again.output_dir == "results"
    assert config_to_dict(again) == config_to_dict(cfg)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigurationError, match="top-level"):
        config_from_dict({"rigg": {}})
    with pytest.raises(ConfigurationError, match="unknown keys"):
        config_from_dict({"rig": {"n_based": 38}})
    with pytest.raises(ConfigurationError, match="adapter kind"):
        config_from_dict({"adapters": {"oracle": {}}})
    with pytest.raises(ConfigurationError):
        config_from_dict([1, 2])


def test_invalid_section_values_rejected():
    with pytest.raises(ConfigurationError):
        config_from_dict({"rig": {"fov_deg": 200.0}})
    with pytest.raises(ConfigurationError):
        config_from_dict({"pointcloud": {"source_dims": "big"}})


def test_adapters_section_round_trip(tmp_path):
    data = {
        "adapters": {
            "depth": {"transport": "http", "uri": "http://shim:8080"},
        }
    }
    cfg = config_from_dict(data)
    assert cfg.adapters["depth"].transport == "http"
    assert cfg.adapters["depth"].uri == "http://shim:8080"
    assert cfg.adapters["inpaint"].transport == "stub"
    again = config_from_dict(config_to_dict(cfg))
    assert again.adapters["depth"].uri == "http://shim:8080"


def test_pointcloud_config_validation():
    with pytest.raises(ConfigurationError):
        PointCloudConfig(gradient_threshold=0.0)
    with pytest.raises(ConfigurationError):
        PointCloudConfig(point_radius=0.1)


def test_invalid_json_raises(tmp_path):
    (tmp_path / "broken.json").write_text("{not json")
    with pytest.raises(ConfigurationError, match="JSON"):
        load_config(tmp_path / "broken.json")
