"""Loss, Adam-based optimization with split/clone densification, and the
two-stage reconstruction driver (Pre Optimization then Transfer Optimization)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ConfigurationError, PipelineError
from ..pointcloud import PointCloud
from ..rig import CameraRig, SupervisionItem, SupervisionSet, build_inp_set
from .field import DensifyStats, GaussianField, densify_and_prune, init_from_point_cloud
from .rasterize import rasterize

# contributions below one quantization step are dropped during training
TRAIN_ALPHA_CUTOFF = 1.0 / 255.0


@dataclass
class OptimizationSchedule:
    pre_pcd_iters: int = 2000
    pre_pano_iters: int = 2000
    transfer_iters: int = 5000
    densify_interval: int = 100
    densify_grad_threshold: float = 2e-4  # in half-screen (NDC-like) units
    densify_stop_frac: float = 0.8
    lr_position: float = 1.6e-4  # times scene extent, exponentially decayed
    lr_position_final_mult: float = 0.01
    lr_sh: float = 2.5e-3
    lr_opacity: float = 5e-2
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lambda_dssim: float = 0.2

    def __post_init__(self):
        if min(self.pre_pcd_iters, self.pre_pano_iters, self.transfer_iters) <= 0:
            raise ConfigurationError("iteration counts must be > 0")
        if self.densify_interval < 1:
            raise ConfigurationError("densify_interval must be >= 1")
        if not 0.0 <= self.lambda_dssim <= 1.0:
            raise ConfigurationError("lambda_dssim must be within [0, 1]")
        if not 0.0 <= self.densify_stop_frac <= 1.0:
            raise ConfigurationError("densify_stop_frac must be within [0, 1]")


# ---------------------------------------------------------------------------
# loss


def _gaussian_kernel(size: int = 11, sigma: float = 1.5, dtype=torch.float64) -> torch.Tensor:
    ax = torch.arange(size, dtype=dtype) - (size - 1) / 2.0
    g = torch.exp(-(ax**2) / (2 * sigma**2))
    k = torch.outer(g, g)
    return k / k.sum()


def _ssim_map(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-window SSIM, valid padding; inputs (H,W,3)."""
    dtype = a.dtype
    win = _gaussian_kernel(dtype=dtype).expand(3, 1, 11, 11)
    x = a.permute(2, 0, 1)[None]
    y = b.permute(2, 0, 1)[None]
    mx = F.conv2d(x, win, groups=3)
    my = F.conv2d(y, win, groups=3)
    mxx = F.conv2d(x * x, win, groups=3) - mx * mx
    myy = F.conv2d(y * y, win, groups=3) - my * my
    mxy = F.conv2d(x * y, win, groups=3) - mx * my
    c1, c2 = 0.01**2, 0.03**2
    s = ((2 * mx * my + c1) * (2 * mxy + c2)) / ((mx**2 + my**2 + c1) * (mxx + myy + c2))
    return s[0]  # (3, H-10, W-10)


def compute_loss(
    render: torch.Tensor,
    target,
    mask=None,
    lambda_dssim: float = 0.2,
) -> torch.Tensor:
    """(1 - lambda) * L1 + lambda * (1 - SSIM) over unmasked pixels.
    mask True marks pixels excluded from supervision."""
    dtype = render.dtype
    target_t = torch.as_tensor(np.asarray(target), dtype=dtype)
    if target_t.shape != render.shape:
        raise PipelineError(f"loss shape mismatch {tuple(render.shape)} vs {tuple(target_t.shape)}")
    if mask is not None:
        keep = ~torch.as_tensor(np.asarray(mask, bool))
        if not keep.any():
            return render.sum() * 0.0
    else:
        keep = torch.ones(render.shape[:2], dtype=torch.bool)
    l1 = (render - target_t).abs()[keep].mean()
    if lambda_dssim == 0.0 or render.shape[0] < 11 or render.shape[1] < 11:
        return l1
    smap = _ssim_map(render, target_t)
    # windows free of masked pixels
    if mask is not None and (~keep).any():
        ones = torch.ones((1, 1, 11, 11), dtype=dtype)
        bad = F.conv2d((~keep).to(dtype)[None, None], ones)[0, 0] > 0
        ok = ~bad
    else:
        ok = torch.ones(smap.shape[1:], dtype=torch.bool)
    if not ok.any():
        return l1 * (1.0 - lambda_dssim)
    dssim = 1.0 - smap[:, ok].mean()
    return (1.0 - lambda_dssim) * l1 + lambda_dssim * dssim


def loss_and_image_gradient(render, target, mask=None, lambda_dssim: float = 0.2):
    """Loss value plus its gradient with respect to the rendered image."""
    r = torch.as_tensor(np.asarray(render, np.float64)).clone().requires_grad_(True)
    loss = compute_loss(r, target, mask, lambda_dssim)
    loss.backward()
    return float(loss.detach()), r.grad.numpy()


# ---------------------------------------------------------------------------
# optimizer with densification-aware state carry-over


class FieldOptimizer:
    GROUPS = ("positions", "log_scales", "rotations", "opacity_logits", "sh")

    def __init__(self, fld: GaussianField, sched: OptimizationSchedule,
                 scene_extent: float, total_iters: int):
        self.sched = sched
        self.extent = scene_extent
        self.total_iters = total_iters
        self.step_count = 0
        self._build(fld)

    def _lrs(self) -> dict[str, float]:
        s = self.sched
        return {
            "positions": s.lr_position * self.extent,
            "log_scales": s.lr_scale,
            "rotations": s.lr_rotation,
            "opacity_logits": s.lr_opacity,
            "sh": s.lr_sh,
        }

    def _build(self, fld: GaussianField):
        fld.requires_grad_(True)
        lrs = self._lrs()
        self.fld = fld
        self.opt = torch.optim.Adam(
            [{"params": [fld.params[g]], "lr": lrs[g], "name": g} for g in self.GROUPS],
            eps=1e-15,
        )

    def step(self):
        # exponential position-lr decay over the phase
        t = min(self.step_count / max(self.total_iters - 1, 1), 1.0)
        mult = self.sched.lr_position_final_mult**t
        for group in self.opt.param_groups:
            if group["name"] == "positions":
                group["lr"] = self.sched.lr_position * self.extent * mult
        self.opt.step()
        self.fld.project_constraints_()
        self.step_count += 1

    def zero_grad(self):
        self.opt.zero_grad(set_to_none=True)

    def rebuild_after_densify(self, new_fld: GaussianField, index_map) -> None:
        """Carry Adam moments: surviving Gaussians keep their state, new copies
        start from zero moments."""
        keep = index_map["keep"]
        copies = index_map["copies"]
        old_state = {}
        for group in self.opt.param_groups:
            p = group["params"][0]
            old_state[group["name"]] = self.opt.state.get(p)
        step = self.step_count
        self._build(new_fld)
        for group in self.opt.param_groups:
            name = group["name"]
            st = old_state.get(name)
            if not st:
                continue
            p = group["params"][0]
            n_new = len(p)

            def expand(t):
                parts = [t[keep]]
                if len(copies):
                    parts.append(torch.zeros((len(copies), *t.shape[1:]), dtype=t.dtype))
                out = torch.cat(parts, dim=0)
                # split parents contribute two copies; clones one
                return out[:n_new] if len(out) >= n_new else torch.cat(
                    [out, torch.zeros((n_new - len(out), *t.shape[1:]), dtype=t.dtype)]
                )

            self.opt.state[p] = {
                "step": st["step"],
                "exp_avg": expand(st["exp_avg"]),
                "exp_avg_sq": expand(st["exp_avg_sq"]),
            }
        self.step_count = step


# ---------------------------------------------------------------------------
# phase driver


def optimize_phase(
    fld: GaussianField,
    views: list[SupervisionItem],
    iters: int,
    sched: OptimizationSchedule,
    phase_name: str,
    seed: int = 0,
    densify: bool = True,
    scene_extent: float | None = None,
    log: list | None = None,
    z_near: float = 0.05,
    iter_offset: int = 0,
) -> GaussianField:
    """Optimize the field on a view pool for `iters` iterations, densifying at
    multiples of the densify interval.  `iter_offset` continues a global
    iteration counter so densification stays aligned across phases."""
    if scene_extent is None:
        scene_extent = fld.scene_extent()
    rng = np.random.default_rng([seed, hash_phase(phase_name)])
    optim = FieldOptimizer(fld, sched, scene_extent, iters)
    stats = DensifyStats.zeros(len(fld))
    gen = torch.Generator().manual_seed(seed + 917)
    half_screen = max(views[0].intrinsics.width, views[0].intrinsics.height) / 2.0
    for it in range(1, iters + 1):
        view = views[rng.integers(len(views))]
        optim.zero_grad()
        out = rasterize(optim.fld, view.intrinsics, view.pose, z_near=z_near,
                        mode="sparse", alpha_cutoff=TRAIN_ALPHA_CUTOFF,
                        track_means2d=True)
        loss = compute_loss(out.rgb, view.rgb, view.mask, sched.lambda_dssim)
        if not torch.isfinite(loss):
            raise PipelineError(f"loss diverged (non-finite) at {phase_name} iteration {it}")
        loss.backward()
        with torch.no_grad():
            if out.means2d is not None and out.means2d.grad is not None:
                g2 = out.means2d.grad.norm(dim=1) * half_screen
                stats.add(g2.to(stats.grad_sum.dtype), out.visible.to(stats.count.dtype))
        optim.step()
        if log is not None:
            log.append(
                {"phase": phase_name, "iter": iter_offset + it,
                 "loss": float(loss.detach()), "n_gaussians": len(optim.fld)}
            )
        global_it = iter_offset + it
        if (
            densify
            and global_it % sched.densify_interval == 0
            and it <= sched.densify_stop_frac * iters
        ):
            new_fld, index_map = densify_and_prune(
                optim.fld.detach_clone(), stats, sched.densify_grad_threshold,
                scene_extent, generator=gen,
            )
            optim.rebuild_after_densify(new_fld, index_map)
            stats = DensifyStats.zeros(len(new_fld))
            if log is not None:
                with torch.no_grad():
                    op = new_fld.opacities
                    op_std = float(op.std()) if len(op) > 1 else 0.0
                log.append(
                    {"phase": phase_name, "iter": global_it, "event": "densify",
                     "n_gaussians": len(new_fld), "opacity_std": op_std}
                )
    out_fld = optim.fld.detach_clone()
    out_fld.requires_grad_(False)
    return out_fld


def hash_phase(name: str) -> int:
    return sum(ord(c) * (31**i) for i, c in enumerate(name)) % (2**31)


# ---------------------------------------------------------------------------
# two-stage reconstruction


def two_stage_reconstruct(
    p_f: PointCloud,
    pano_set: SupervisionSet,
    pcd_set: SupervisionSet,
    inpaint_client,
    rig: CameraRig,
    sched: OptimizationSchedule = OptimizationSchedule(),
    sh_degree: int = 1,
    seed: int = 0,
    dtype=torch.float64,
    log: list | None = None,
) -> tuple[GaussianField, GaussianField, SupervisionSet]:
    """Pre Optimization (PCD then PANO supervision) followed by Transfer
    Optimization on freshly initialized Gaussians supervised by INP + PANO.
    Returns (final field G1, pre-stage field G0, INP set)."""
    g0 = init_from_point_cloud(p_f, sh_degree=sh_degree, dtype=dtype)
    extent = g0.scene_extent()
    g0 = optimize_phase(g0, pcd_set.items, sched.pre_pcd_iters, sched, "pre_pcd",
                        seed=seed, scene_extent=extent, log=log)
    g0 = optimize_phase(g0, pano_set.items, sched.pre_pano_iters, sched, "pre_pano",
                        seed=seed, scene_extent=extent, log=log,
                        iter_offset=sched.pre_pcd_iters)

    def render_fn(intr, pose):
        return rasterize(g0, intr, pose, mode="sparse").rgb.detach().numpy()

    inp_set = build_inp_set(render_fn, rig, pcd_set, inpaint_client)

    g1 = init_from_point_cloud(p_f, sh_degree=sh_degree, dtype=dtype)
    joint = list(inp_set.items) + list(pano_set.items)
    g1 = optimize_phase(
        g1, joint, sched.transfer_iters, sched, "transfer",
        seed=seed, scene_extent=extent, log=log,
        iter_offset=sched.pre_pcd_iters + sched.pre_pano_iters,
    )
    return g1, g0, inp_set
