"""Reconstruction variants for ablation studies, plus the supplementary-view
quality metrics they are compared on.

Variants:
  full         - the standard pipeline (gradient filter, point-cloud init,
                 two-stage optimization)
  no-filter    - point clouds built without the depth-gradient filter
  no-pcd-init  - Gaussians initialized from a random cloud instead of P_f
  pano-only    - single-stage baseline trained on the PANO set alone
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigurationError
from .geometry import PanoDims, Panorama
from .metrics import psnr
from .pointcloud import PointCloud, downsample, filtered_point_cloud, reverse_erp_project
from .rig import CameraRig, build_pano_set, build_pcd_set
from .splat.field import init_from_point_cloud
from .splat.optimize import OptimizationSchedule, optimize_phase, two_stage_reconstruct
from .splat.rasterize import rasterize
from .synth import SyntheticScene

VARIANTS = ("full", "no-filter", "no-pcd-init", "pano-only")


@dataclass
class VariantResult:
    name: str
    field: object  # final GaussianField
    zero_alpha_frac: float  # mean fraction of alpha == 0 pixels, supplementary views
    coverage: float  # fraction of supplementary pixels matching ground truth
    psnr_pano: float  # mean PSNR of renders against the PANO set
    n_gaussians: int


def random_cloud_like(pc: PointCloud, seed: int) -> PointCloud:
    """A cloud with the same point count but random positions inside the scene's
    bounding sphere and mid-gray colors; used by the no-pcd-init ablation."""
    rng = np.random.default_rng([seed, 0xAB1])
    n = len(pc)
    radius = float(np.linalg.norm(pc.positions, axis=1).max())
    dirs = rng.standard_normal((n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = radius * rng.uniform(0.2, 1.0, n) ** (1.0 / 3.0)
    colors = rng.uniform(0.2, 0.8, (n, 3))
    return PointCloud(dirs * r[:, None], colors, np.zeros((n, 2), np.int64))


def supplementary_metrics(
    field,
    rig: CameraRig,
    scene: SyntheticScene,
    n_views: int = 24,
    color_tol: float = 0.05,
) -> tuple[float, float]:
    """(zero-alpha fraction, ground-truth coverage) averaged over an evenly
    strided subset of supplementary views.  The color tolerance is tight on
    purpose: smeared floaters often land within 0.1 of the true color, so a
    looser tolerance saturates and stops registering artifacts."""
    poses = rig.all_supplementary
    stride = max(len(poses) // n_views, 1)
    zero, cov = [], []
    for pose in poses[::stride]:
        out = rasterize(field, rig.intrinsics, pose, mode="sparse")
        alpha = out.alpha.detach().numpy()
        render = np.clip(out.rgb.detach().numpy(), 0.0, 1.0)
        _, gt = scene.render_view(rig.intrinsics, pose)
        zero.append(float(np.mean(alpha == 0.0)))
        cov.append(float(np.mean(np.abs(render - gt).max(axis=2) < color_tol)))
    return float(np.mean(zero)), float(np.mean(cov))


def pano_set_psnr(field, pano_set, n_views: int = 8) -> float:
    stride = max(len(pano_set.items) // n_views, 1)
    vals = []
    for item in pano_set.items[::stride]:
        render = rasterize(field, item.intrinsics, item.pose, mode="sparse").rgb
        vals.append(psnr(np.clip(render.detach().numpy(), 0.0, 1.0), item.rgb))
    return float(np.mean(vals))


def run_variant(
    name: str,
    scene: SyntheticScene,
    pano: Panorama,
    rig: CameraRig,
    sched: OptimizationSchedule,
    inpaint_client,
    sparse_dims: PanoDims,
    gradient_threshold: float = 0.4,
    seed: int = 0,
    dtype=torch.float32,
    log: list | None = None,
) -> VariantResult:
    """Run one reconstruction variant on a synthetic scene panorama (with depth)
    and score it at the supplementary views."""
    if name not in VARIANTS:
        raise ConfigurationError(f"unknown variant '{name}' (choose from {VARIANTS})")
    filtered = name != "no-filter"
    if filtered:
        p_f = filtered_point_cloud(pano, gradient_threshold)
        p_s = filtered_point_cloud(downsample(pano, sparse_dims), gradient_threshold)
    else:
        p_f = reverse_erp_project(pano)
        p_s = reverse_erp_project(downsample(pano, sparse_dims))
    pano_set = build_pano_set(pano, rig)
    pcd_set = build_pcd_set(p_s, rig)

    if name == "pano-only":
        total = sched.pre_pcd_iters + sched.pre_pano_iters + sched.transfer_iters
        g = init_from_point_cloud(p_f, sh_degree=1, dtype=dtype)
        field = optimize_phase(
            g, pano_set.items, total, sched, "pano_only", seed=seed, log=log
        )
    else:
        init_cloud = random_cloud_like(p_f, seed) if name == "no-pcd-init" else p_f
        field, _, _ = two_stage_reconstruct(
            init_cloud, pano_set, pcd_set, inpaint_client, rig, sched,
            seed=seed, dtype=dtype, log=log,
        )
    zero, cov = supplementary_metrics(field, rig, scene)
    return VariantResult(
        name=name,
        field=field,
        zero_alpha_frac=zero,
        coverage=cov,
        psnr_pano=pano_set_psnr(field, pano_set),
        n_gaussians=len(field),
    )
