"""Command-line driver: synthetic fixtures, staged generation, depth fusion,
point clouds, rigs, two-stage reconstruction, rendering, and evaluation.

Every command reads/writes plain artifacts (PNG, PFM, PLY, JSON) under the
output directory and materializes the fully resolved configuration next to
them for provenance.
"""

from __future__ import annotations

import dataclasses
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import ablation
from .adapters import AdapterEndpoint, build_client
from .adapters.stubs import AnalyticDepthStub, AnalyticMetricStub
from .config import PipelineConfig, config_to_dict, desk_scale, load_config
from .depth import estimate_panorama_depth
from .errors import PanosplatError
from .geometry import PanoDims, Panorama, Pose
from .imageio import read_pfm, read_png, write_pfm, write_png
from .metrics import psnr, ssim
from .panorama import resize_panorama, run_generation_ladder, seam_discontinuity
from .pointcloud import PointCloud, downsample, filtered_point_cloud, reverse_erp_project
from .rig import build_pano_set, build_pcd_set, build_rig, rig_from_json, rig_to_json
from .splat.field import GaussianField
from .splat.optimize import two_stage_reconstruct
from .splat.rasterize import rasterize
from .synth import SyntheticScene, scene_from_dict, scene_to_dict, synth_scene_panorama


class Context:
    def __init__(self, cfg: PipelineConfig, out: Path):
        self.cfg = cfg
        self.out = out

    def client(self, kind: str, scene: SyntheticScene | None = None):
        endpoint = self.cfg.adapters[kind]
        factory = None
        if scene is not None and endpoint.transport == "stub":
            stubs = {
                "depth": lambda: AnalyticDepthStub(scene, corrupt_seed=self.cfg.seed),
                "metric_depth": lambda: AnalyticMetricStub(scene),
            }
            if kind in stubs:
                factory = lambda k: stubs[k]()
        return build_client(endpoint, stub_factory=factory)

    def write_config(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "config.json").write_text(
            json.dumps(config_to_dict(self.cfg), indent=2) + "\n"
        )


def _load_scene(directory: Path) -> SyntheticScene | None:
    path = directory / "scene.json"
    if not path.is_file():
        return None
    return scene_from_dict(json.loads(path.read_text()))


def _read_panorama(directory: Path, with_depth: bool = False) -> Panorama:
    rgb = read_png(directory / "pano.png")
    dims = PanoDims(rgb.shape[1], rgb.shape[0])
    depth = None
    if with_depth:
        depth = read_pfm(directory / "depth.pfm")
    return Panorama(dims=dims, rgb=rgb, depth=depth)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON configuration file (defaults apply when omitted).")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Output directory.")
@click.option("--scale", type=click.Choice(["desk", "full"]), default="desk",
              help="Resolution preset: quick desk-scale or full published sizes.")
@click.option("--adapters", "transport", type=click.Choice(["stub", "http", "directory"]),
              default=None, help="Force one transport for every adapter.")
@click.option("--adapters-uri", default=None, help="Base URI for http adapters.")
@click.option("--adapters-path", type=click.Path(), default=None,
              help="Directory for precomputed adapter results.")
@click.pass_context
def main(ctx, config_path, seed, out_dir, scale, transport, adapters_uri, adapters_path):
    """Equirectangular panorama to an enclosed 3D Gaussian scene."""
    cfg = load_config(config_path) if config_path else PipelineConfig()
    if scale == "desk":
        cfg = desk_scale(cfg)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    if out_dir is not None:
        cfg = dataclasses.replace(cfg, output_dir=out_dir)
    if transport is not None:
        cfg = dataclasses.replace(cfg, adapters={
            kind: AdapterEndpoint(kind, transport=transport, uri=adapters_uri, path=adapters_path)
            for kind in cfg.adapters
        })
    ctx.obj = Context(cfg, Path(cfg.output_dir))


def command(fn):
    """Wrap a command so pipeline errors exit nonzero with a diagnostic."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PanosplatError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


# ---------------------------------------------------------------------------


@main.command()
@click.option("--scene-seed", type=int, default=None, help="Scene geometry seed (default: run seed).")
@click.option("--occluders", type=int, default=2, show_default=True)
@click.pass_obj
@command
def synth(ctx: Context, scene_seed, occluders):
    """Write a synthetic room panorama with exact depth (the test fixture)."""
    ctx.write_config()
    seed = ctx.cfg.seed if scene_seed is None else scene_seed
    scene = SyntheticScene.room(seed=seed, n_occluders=occluders)
    pano = synth_scene_panorama(scene, ctx.cfg.depth.working_dims)
    write_png(ctx.out / "pano.png", pano.rgb)
    write_pfm(ctx.out / "depth_gt.pfm", pano.depth)
    (ctx.out / "scene.json").write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")
    click.echo(f"synth: {pano.dims.width}x{pano.dims.height} panorama -> {ctx.out}")


@main.command()
@click.option("--prompt", default="a cozy study with wooden shelves", show_default=True)
@click.pass_obj
@command
def generate(ctx: Context, prompt):
    """Run the staged generation ladder through the generator adapter."""
    ctx.write_config()
    pano = run_generation_ladder(prompt, ctx.client("generator"), ctx.cfg.ladder)
    write_png(ctx.out / "pano.png", pano.rgb)
    meta = dict(pano.metadata)
    meta["seam_discontinuity"] = seam_discontinuity(pano.rgb)
    (ctx.out / "generate.json").write_text(json.dumps(meta, indent=2) + "\n")
    click.echo(f"generate: {pano.dims.width}x{pano.dims.height} panorama -> {ctx.out}")


@main.command()
@click.option("--input", "input_dir", type=click.Path(exists=True), default=None,
              help="Directory with pano.png (default: the output directory).")
@click.pass_obj
@command
def depth(ctx: Context, input_dir):
    """Estimate metric panorama depth via tangent-face fusion."""
    ctx.write_config()
    src = Path(input_dir) if input_dir else ctx.out
    pano = _read_panorama(src)
    if pano.dims != ctx.cfg.depth.working_dims:
        pano = resize_panorama(pano, ctx.cfg.depth.working_dims)
    scene = _load_scene(src)
    cfg = dataclasses.replace(ctx.cfg.depth, seed=ctx.cfg.seed)
    pano, calib = estimate_panorama_depth(
        pano, ctx.client("depth", scene), ctx.client("metric_depth", scene), cfg
    )
    write_pfm(ctx.out / "depth.pfm", pano.depth)
    preview = pano.depth / pano.depth.max()
    write_png(ctx.out / "depth_preview.png", np.repeat(preview[:, :, None], 3, axis=2))
    (ctx.out / "calibration.json").write_text(json.dumps({
        "scale": calib.scale, "offset": calib.offset,
        "residual_rms": calib.residual_rms, "n_samples": calib.n_samples,
    }, indent=2) + "\n")
    click.echo(f"depth: calibrated scale={calib.scale:.4g} offset={calib.offset:.4g} -> {ctx.out}")


@main.command()
@click.option("--input", "input_dir", type=click.Path(exists=True), default=None,
              help="Directory with pano.png and depth.pfm (default: output directory).")
@click.option("--no-filter", is_flag=True, help="Skip the depth-gradient filter.")
@click.pass_obj
@command
def pointcloud(ctx: Context, input_dir, no_filter):
    """Build the filtered cloud P_f and the sparse cloud P_s."""
    ctx.write_config()
    src = Path(input_dir) if input_dir else ctx.out
    pano = _read_panorama(src, with_depth=True)
    pc_cfg = ctx.cfg.pointcloud
    working = downsample(pano, pc_cfg.source_dims) if pano.dims != pc_cfg.source_dims else pano
    sparse = downsample(pano, pc_cfg.sparse_dims)
    if no_filter:
        p_f, p_s = reverse_erp_project(working), reverse_erp_project(sparse)
    else:
        p_f = filtered_point_cloud(working, pc_cfg.gradient_threshold, pc_cfg.normalized_gradient)
        p_s = filtered_point_cloud(sparse, pc_cfg.gradient_threshold, pc_cfg.normalized_gradient)
    p_f.save_ply(ctx.out / "cloud.ply")
    p_s.save_ply(ctx.out / "sparse.ply")
    (ctx.out / "pointcloud.json").write_text(json.dumps({
        "n_filtered": len(p_f), "n_sparse": len(p_s),
        "kept_fraction": len(p_f) / (pc_cfg.source_dims.width * pc_cfg.source_dims.height),
    }, indent=2) + "\n")
    click.echo(f"pointcloud: {len(p_f)} filtered points, {len(p_s)} sparse -> {ctx.out}")


@main.command()
@click.pass_obj
@command
def rig(ctx: Context):
    """Write the base + supplementary camera rig as JSON."""
    ctx.write_config()
    r = build_rig(ctx.cfg.rig)
    (ctx.out / "rig.json").write_text(rig_to_json(r) + "\n")
    click.echo(f"rig: {len(r.base_poses)} base, {len(r.all_supplementary)} supplementary -> {ctx.out}")


@main.command()
@click.option("--input", "input_dir", type=click.Path(exists=True), default=None,
              help="Directory with pano.png, depth.pfm, cloud.ply, sparse.ply, rig.json.")
@click.option("--dry-run", is_flag=True, help="Print the resolved schedule and exit.")
@click.pass_obj
@command
def reconstruct(ctx: Context, input_dir, dry_run):
    """Two-stage Gaussian optimization: Pre (PCD then PANO) then Transfer (INP + PANO)."""
    sched = ctx.cfg.schedule
    click.echo(
        "schedule: pre_pcd=%d pre_pano=%d transfer=%d (densify every %d)"
        % (sched.pre_pcd_iters, sched.pre_pano_iters, sched.transfer_iters, sched.densify_interval)
    )
    if dry_run:
        return
    import torch

    ctx.write_config()
    src = Path(input_dir) if input_dir else ctx.out
    pano = _read_panorama(src, with_depth=True)
    p_f = PointCloud.load_ply(src / "cloud.ply")
    p_s = PointCloud.load_ply(src / "sparse.ply")
    r = rig_from_json((src / "rig.json").read_text(), ctx.cfg.rig)
    pano_set = build_pano_set(pano, r)
    pcd_set = build_pcd_set(p_s, r, ctx.cfg.pointcloud.point_radius, ctx.cfg.pointcloud.z_near)
    log: list = []
    t0 = time.time()
    g1, g0, _ = two_stage_reconstruct(
        p_f, pano_set, pcd_set, ctx.client("inpaint"), r, sched,
        seed=ctx.cfg.seed, dtype=torch.float32, log=log,
    )
    g0.save_ply(ctx.out / "g0.ply")
    g1.save_ply(ctx.out / "g1.ply")
    with open(ctx.out / "loss_log.jsonl", "w") as fh:
        for entry in log:
            fh.write(json.dumps(entry) + "\n")
    (ctx.out / "reconstruct.json").write_text(json.dumps({
        "n_gaussians_g0": len(g0), "n_gaussians_g1": len(g1),
        "seconds": time.time() - t0,
        "final_loss": next((e["loss"] for e in reversed(log) if "loss" in e), None),
    }, indent=2) + "\n")
    click.echo(f"reconstruct: G1 with {len(g1)} Gaussians -> {ctx.out}")


@main.command()
@click.option("--field", "field_path", type=click.Path(exists=True), required=True,
              help="Gaussian field PLY.")
@click.option("--rig", "rig_path", type=click.Path(exists=True), required=True,
              help="Camera rig JSON (or any file in its schema).")
@click.option("--set", "which", type=click.Choice(["base", "supp", "all"]), default="base",
              show_default=True)
@click.option("--limit", type=int, default=0, help="Render at most N views (0 = all).")
@click.pass_obj
@command
def render(ctx: Context, field_path, rig_path, which, limit):
    """Render a saved Gaussian field at rig poses."""
    ctx.write_config()
    fld = GaussianField.load_ply(field_path)
    r = rig_from_json(Path(rig_path).read_text(), ctx.cfg.rig)
    poses: list[tuple[str, Pose]] = []
    if which in ("base", "all"):
        poses += [(f"base_{i:03d}", p) for i, p in enumerate(r.base_poses)]
    if which in ("supp", "all"):
        poses += [(f"supp_{i:03d}", p) for i, p in enumerate(r.all_supplementary)]
    if limit:
        poses = poses[:limit]
    render_dir = ctx.out / "renders"
    render_dir.mkdir(parents=True, exist_ok=True)
    for name, pose in poses:
        out = rasterize(fld, r.intrinsics, pose, mode="sparse")
        write_png(render_dir / f"{name}.png", np.clip(out.rgb.detach().numpy(), 0.0, 1.0))
    click.echo(f"render: {len(poses)} views -> {render_dir}")


@main.command()
@click.option("--dir-a", type=click.Path(exists=True), required=True)
@click.option("--dir-b", type=click.Path(exists=True), required=True)
@click.pass_obj
@command
def evaluate(ctx: Context, dir_a, dir_b):
    """PSNR/SSIM over same-named PNG pairs in two directories."""
    ctx.write_config()
    a_dir, b_dir = Path(dir_a), Path(dir_b)
    names = sorted(p.name for p in a_dir.glob("*.png") if (b_dir / p.name).is_file())
    if not names:
        click.echo("error: no matching image pairs", err=True)
        sys.exit(1)
    rows = []
    for name in names:
        a, b = read_png(a_dir / name), read_png(b_dir / name)
        rows.append({"name": name, "psnr": psnr(a, b), "ssim": ssim(a, b)})
    summary = {
        "mean_psnr": float(np.mean([r["psnr"] for r in rows])),
        "mean_ssim": float(np.mean([r["ssim"] for r in rows])),
        "rows": rows,
    }
    (ctx.out / "metrics.json").write_text(json.dumps(summary, indent=2) + "\n")
    lines = ["| image | PSNR (dB) | SSIM |", "|---|---|---|"]
    lines += [f"| {r['name']} | {r['psnr']:.3f} | {r['ssim']:.4f} |" for r in rows]
    lines += [f"| **mean** | {summary['mean_psnr']:.3f} | {summary['mean_ssim']:.4f} |"]
    (ctx.out / "metrics.md").write_text("\n".join(lines) + "\n")
    click.echo(f"evaluate: mean PSNR {summary['mean_psnr']:.2f} dB, SSIM {summary['mean_ssim']:.4f}")


@main.command()
@click.option("--mode", type=click.Choice(ablation.VARIANTS), required=True)
@click.option("--input", "input_dir", type=click.Path(exists=True), default=None,
              help="Directory with pano.png, depth.pfm, scene.json.")
@click.pass_obj
@command
def ablate(ctx: Context, mode, input_dir):
    """Run one reconstruction variant and report supplementary-view quality."""
    import torch

    ctx.write_config()
    src = Path(input_dir) if input_dir else ctx.out
    scene = _load_scene(src)
    if scene is None:
        click.echo("error: ablation needs scene.json (run `synth` first)", err=True)
        sys.exit(1)
    pano = _read_panorama(src, with_depth=True)
    pc_cfg = ctx.cfg.pointcloud
    if pano.dims != pc_cfg.source_dims:
        pano = downsample(pano, pc_cfg.source_dims)
    r = build_rig(ctx.cfg.rig)
    result = ablation.run_variant(
        mode, scene, pano, r, ctx.cfg.schedule, ctx.client("inpaint"),
        sparse_dims=pc_cfg.sparse_dims, gradient_threshold=pc_cfg.gradient_threshold,
        seed=ctx.cfg.seed, dtype=torch.float32,
    )
    doc = {
        "mode": result.name,
        "zero_alpha_frac": result.zero_alpha_frac,
        "coverage": result.coverage,
        "psnr_pano": result.psnr_pano,
        "n_gaussians": result.n_gaussians,
    }
    (ctx.out / f"ablate_{mode}.json").write_text(json.dumps(doc, indent=2) + "\n")
    click.echo(
        f"ablate {mode}: coverage {result.coverage:.4f}, "
        f"zero-alpha {result.zero_alpha_frac:.4f}, PSNR {result.psnr_pano:.2f} dB"
    )


if __name__ == "__main__":
    main()
