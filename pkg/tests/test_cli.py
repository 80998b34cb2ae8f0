"""End-to-end command-line pipeline at micro scale."""

from __future__ import annotations

import json

import numpy as np
import pytest
from click.testing import CliRunner

from panosplat.cli import main
from panosplat.config import PipelineConfig, config_to_dict


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def micro_config(tmp_path_factory):
    """A configuration small enough for every command to finish in seconds."""

    from panosplat.depth import DepthFusionConfig
    from panosplat.config import PointCloudConfig
    from panosplat.geometry import PanoDims
    from panosplat.rig import RigConfig
    from panosplat.splat.optimize import OptimizationSchedule

    cfg = PipelineConfig(
        depth=DepthFusionConfig(
            working_dims=PanoDims(256, 128), face_res=48, overlap_samples_per_pair=300
        ),
        pointcloud=PointCloudConfig(
            source_dims=PanoDims(128, 64), sparse_dims=PanoDims(64, 32)
        ),
        rig=RigConfig(image_size=32),
        schedule=OptimizationSchedule(
            pre_pcd_iters=20, pre_pano_iters=20, transfer_iters=30, densify_interval=10
        ),
    )
    path = tmp_path_factory.mktemp("cfg") / "micro.json"
    path.write_text(json.dumps(config_to_dict(cfg)))
    return str(path)


@pytest.fixture(scope="module")
def pipeline_dir(runner, micro_config, tmp_path_factory):
    """Run synth -> depth -> pointcloud -> rig -> reconstruct once, shared."""
    out = str(tmp_path_factory.mktemp("run"))
    base = ["--config", micro_config, "--scale", "full", "--out", out]
    for cmd in (["synth"], ["depth"], ["pointcloud"], ["rig"], ["reconstruct"]):
        res = runner.invoke(main, base + cmd, catch_exceptions=False)
        assert res.exit_code == 0, f"{cmd}: {res.output}"
    return out


def test_pipeline_artifacts(pipeline_dir):
    from pathlib import Path

    out = Path(pipeline_dir)
    for name in (
        "config.json", "pano.png", "depth_gt.pfm", "scene.json", "depth.pfm",
        "depth_preview.png", "calibration.json", "cloud.ply", "sparse.ply",
        "pointcloud.json", "rig.json", "g0.ply", "g1.ply", "loss_log.jsonl",
        "reconstruct.json",
    ):
        assert (out / name).is_file(), name
    calib = json.loads((out / "calibration.json").read_text())
    assert calib["scale"] > 0
    recon = json.loads((out / "reconstruct.json").read_text())
    assert recon["n_gaussians_g1"] > 0
    lines = (out / "loss_log.jsonl").read_text().splitlines()
    assert len(lines) >= 70
    assert all("phase" in json.loads(ln) for ln in lines)


def test_depth_matches_ground_truth(pipeline_dir):
    from pathlib import Path

    from panosplat.imageio import read_pfm

    out = Path(pipeline_dir)
    est = read_pfm(out / "depth.pfm")
    gt = read_pfm(out / "depth_gt.pfm")
    rel = np.abs(est - gt) / gt
    assert np.median(rel) < 0.02


def test_reconstruct_dry_run(runner, micro_config, tmp_path):
    res = runner.invoke(
        main,
        ["--config", micro_config, "--scale", "full", "--out", str(tmp_path),
         "reconstruct", "--dry-run"],
        catch_exceptions=False,
    )
    assert res.exit_code == 0
    assert "schedule: pre_pcd=20 pre_pano=20 transfer=30 (densify every 10)" in res.output
    assert not (tmp_path / "g1.ply").exists()


def test_render_and_evaluate(runner, micro_config, pipeline_dir, tmp_path):
    base = ["--config", micro_config, "--scale", "full"]
    res = runner.invoke(
        main,
        base + ["--out", str(tmp_path / "r"),
                "render", "--field", f"{pipeline_dir}/g1.ply",
                "--rig", f"{pipeline_dir}/rig.json", "--set", "base", "--limit", "3"],
        catch_exceptions=False,
    )
    assert res.exit_code == 0, res.output
    renders = sorted((tmp_path / "r" / "renders").glob("*.png"))
    assert len(renders) == 3

    res = runner.invoke(
        main,
        base + ["--out", str(tmp_path / "e"), "evaluate",
                "--dir-a", str(tmp_path / "r" / "renders"),
                "--dir-b", str(tmp_path / "r" / "renders")],
        catch_exceptions=False,
    )
    assert res.exit_code == 0, res.output
    metrics = json.loads((tmp_path / "e" / "metrics.json").read_text())
    assert metrics["mean_psnr"] == 99.0
    assert metrics["mean_ssim"] == 1.0
    assert (tmp_path / "e" / "metrics.md").is_file()


def test_evaluate_without_pairs_fails(runner, micro_config, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    res = runner.invoke(
        main,
        ["--config", micro_config, "--out", str(tmp_path / "e"), "evaluate",
         "--dir-a", str(tmp_path / "a"), "--dir-b", str(tmp_path / "b")],
    )
    assert res.exit_code == 1
    assert "no matching image pairs" in res.output


def test_generate_command(runner, micro_config, tmp_path):
    res = runner.invoke(
        main,
        ["--config", micro_config, "--scale", "desk", "--out", str(tmp_path),
         "generate", "--prompt", "tiny test room"],
        catch_exceptions=False,
    )
    assert res.exit_code == 0, res.output
    meta = json.loads((tmp_path / "generate.json").read_text())
    assert meta["seam_discontinuity"] <= 1e-6
    assert [s["stage"] for s in meta["stages"]] == ["base", "stylize", "superres", "tile"]
    assert (tmp_path / "pano.png").is_file()


def test_ablate_requires_scene(runner, micro_config, tmp_path):
    from panosplat.imageio import write_pfm, write_png

    write_png(tmp_path / "pano.png", np.full((64, 128, 3), 0.5))
    write_pfm(tmp_path / "depth.pfm", np.full((64, 128), 2.0))
    res = runner.invoke(
        main,
        ["--config", micro_config, "--scale", "full", "--out", str(tmp_path),
         "ablate", "--mode", "full", "--input", str(tmp_path)],
    )
    assert res.exit_code == 1
    assert "scene.json" in res.output


def test_invalid_config_fails(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"rig": {"fov_deg": 500}}')
    res = runner.invoke(main, ["--config", str(bad), "synth"])
    assert res.exit_code != 0


def test_unknown_subcommand_fails(runner):
    res = runner.invoke(main, ["transmogrify"])
    assert res.exit_code != 0


def test_pipeline_error_exits_nonzero(runner, micro_config, tmp_path):
    """pointcloud with mismatched depth dims hits a pipeline error path."""
    from panosplat.imageio import write_pfm, write_png

    write_png(tmp_path / "pano.png", np.full((64, 100, 3), 0.5))  # not divisible
    write_pfm(tmp_path / "depth.pfm", np.full((64, 100), 2.0))
    res = runner.invoke(
        main,
        ["--config", micro_config, "--scale", "full", "--out", str(tmp_path),
         "pointcloud", "--input", str(tmp_path)],
    )
    assert res.exit_code == 1
    assert "error:" in res.output
