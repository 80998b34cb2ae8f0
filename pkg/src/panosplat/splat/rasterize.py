"""Differentiable forward rasterizer for 3D Gaussian fields.

Per-pixel front-to-back alpha compositing in increasing camera depth order
(ties broken by Gaussian index):
    alpha_i = opacity_i * exp(-0.5 * delta^T Sigma2D^{-1} delta), clipped to 0.999
    C = sum_i c_i alpha_i prod_{j<i} (1 - alpha_j) + background * T_final
2D covariance is J R_c Sigma R_c^T J^T with J the perspective Jacobian at the
mean, regularized by +1e-6 I.  Colors come from spherical harmonics evaluated
along the camera-to-Gaussian direction.

Two execution paths share the math: a dense path (every Gaussian against every
pixel, used by tests and gradient checks) and a sparse path that only evaluates
(Gaussian, pixel) pairs whose contribution can reach `alpha_cutoff` (used for
training).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..geometry import Intrinsics, Pose
from .field import GaussianField

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
         0.3731763325901154, -0.4570457994644658, 1.445305721320277,
         -0.5900435899266435)


def quats_to_rotmats(q: torch.Tensor) -> torch.Tensor:
    q = q / q.norm(dim=1, keepdim=True).clamp_min(1e-12)
    w, x, y, z = q.unbind(dim=1)
    return torch.stack(
        [
            torch.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], dim=1),
            torch.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], dim=1),
            torch.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], dim=1),
        ],
        dim=1,
    )


def eval_sh(degree: int, sh: torch.Tensor, dirs: torch.Tensor) -> torch.Tensor:
    """Evaluate real SH color (N,3) for coefficients (N,K,3) along unit dirs."""
    out = SH_C0 * sh[:, 0]
    if degree >= 1:
        x, y, z = dirs.unbind(dim=1)
        x, y, z = x[:, None], y[:, None], z[:, None]
        out = out - SH_C1 * y * sh[:, 1] + SH_C1 * z * sh[:, 2] - SH_C1 * x * sh[:, 3]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        out = (
            out
            + SH_C2[0] * xy * sh[:, 4]
            + SH_C2[1] * yz * sh[:, 5]
            + SH_C2[2] * (2.0 * zz - xx - yy) * sh[:, 6]
            + SH_C2[3] * xz * sh[:, 7]
            + SH_C2[4] * (xx - yy) * sh[:, 8]
        )
    if degree >= 3:
        out = (
            out
            + SH_C3[0] * y * (3 * xx - yy) * sh[:, 9]
            + SH_C3[1] * xy * z * sh[:, 10]
            + SH_C3[2] * y * (4 * zz - xx - yy) * sh[:, 11]
            + SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy) * sh[:, 12]
            + SH_C3[4] * x * (4 * zz - xx - yy) * sh[:, 13]
            + SH_C3[5] * z * (xx - yy) * sh[:, 14]
            + SH_C3[6] * x * (xx - 3 * yy) * sh[:, 15]
        )
    return out + 0.5


@dataclass
class RasterOut:
    rgb: torch.Tensor  # (H,W,3)
    alpha: torch.Tensor  # (H,W)
    means2d: torch.Tensor | None  # (N,2) projected centers (grad hook target)
    visible: torch.Tensor | None  # (N,) bool, touched the image


def _prepare(fld: GaussianField, intr: Intrinsics, pose: Pose, z_near: float):
    dtype = fld.positions.dtype
    r_wc = torch.tensor(pose.matrix, dtype=dtype)
    t = torch.tensor(pose.position, dtype=dtype)
    cam = (fld.positions - t) @ r_wc  # camera-frame centers
    z = cam[:, 2]
    # frustum cull with margin: the local affine (EWA) projection is only
    # meaningful near the view axis, and grazing centers blow up the Jacobian
    margin = 1.3
    zs0 = z.detach().clamp_min(z_near)
    in_x = cam[:, 0].detach().abs() / zs0 <= margin * (intr.cx + 0.5) / intr.fx
    in_y = cam[:, 1].detach().abs() / zs0 <= margin * (intr.cy + 0.5) / intr.fy
    infront = (z > z_near) & in_x & in_y

    rot = quats_to_rotmats(fld.rotations)
    s = torch.exp(fld.log_scales)
    m = rot * s[:, None, :]
    cov_world = m @ m.transpose(1, 2)
    cov_cam = r_wc.T @ cov_world @ r_wc

    zs = z.clamp_min(z_near)
    fx, fy = intr.fx, intr.fy
    jac = torch.zeros((len(z), 2, 3), dtype=dtype)
    jac[:, 0, 0] = fx / zs
    jac[:, 0, 2] = -fx * cam[:, 0] / zs**2
    jac[:, 1, 1] = -fy / zs
    jac[:, 1, 2] = fy * cam[:, 1] / zs**2
    cov2d = jac @ cov_cam @ jac.transpose(1, 2)
    cov2d = cov2d + 1e-6 * torch.eye(2, dtype=dtype)

    means2d = torch.stack(
        [intr.cx + fx * cam[:, 0] / zs, intr.cy - fy * cam[:, 1] / zs], dim=1
    )

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 1, 0]
    inv = torch.empty_like(cov2d)
    inv[:, 0, 0] = cov2d[:, 1, 1] / det
    inv[:, 1, 1] = cov2d[:, 0, 0] / det
    inv[:, 0, 1] = -cov2d[:, 0, 1] / det
    inv[:, 1, 0] = -cov2d[:, 1, 0] / det

    view_dir = fld.positions - t
    view_dir = view_dir / view_dir.norm(dim=1, keepdim=True).clamp_min(1e-12)
    colors = eval_sh(fld.sh_degree, fld.sh, view_dir)
    opac = torch.sigmoid(fld.opacity_logits)
    return cam, z, infront, means2d, cov2d, inv, colors, opac


def _composite(order, alphas, colors, background, shape, dtype):
    """Front-to-back compositing given per-pixel alphas (K,P) already sorted."""
    one_minus = 1.0 - alphas
    trans = torch.cumprod(one_minus, dim=0)
    trans_excl = torch.cat([torch.ones_like(trans[:1]), trans[:-1]], dim=0)
    weights = alphas * trans_excl  # (K,P)
    rgb = torch.einsum("kp,kc->pc", weights, colors)
    t_final = trans[-1] if len(trans) else torch.ones(shape[0] * shape[1], dtype=dtype)
    rgb = rgb + t_final[:, None] * background[None, :]
    alpha_map = 1.0 - t_final
    return rgb, alpha_map


def rasterize(
    fld: GaussianField,
    intr: Intrinsics,
    pose: Pose,
    z_near: float = 0.05,
    mode: str = "sparse",
    alpha_cutoff: float = 1e-4,
    track_means2d: bool = False,
) -> RasterOut:
    """Render the field.  mode='dense' evaluates every in-front Gaussian at
    every pixel (no truncation; matches the brute-force definition exactly);
    mode='sparse' (alias 'tiled') culls by a conservative radius where the
    contribution falls below `alpha_cutoff`."""
    if mode not in ("dense", "sparse", "tiled"):
        raise ValueError(f"unknown rasterize mode '{mode}'")
    h, w = intr.height, intr.width
    dtype = fld.positions.dtype
    bg = torch.tensor(fld.background, dtype=dtype)
    cam, z, infront, means2d, cov2d, inv, colors, opac = _prepare(fld, intr, pose, z_near)

    if track_means2d and means2d.requires_grad:
        means2d.retain_grad()

    idx = torch.nonzero(infront, as_tuple=True)[0]
    if len(idx) == 0:
        rgb = bg.expand(h * w, 3).reshape(h, w, 3).clone()
        return RasterOut(rgb, torch.zeros((h, w), dtype=dtype), means2d, infront)

    # stable depth order with index tie-break
    order = idx[np.lexsort((idx.numpy(), z[idx].detach().numpy()))]

    px = torch.arange(w, dtype=dtype) + 0.5
    py = torch.arange(h, dtype=dtype) + 0.5

    if mode == "dense":
        gx, gy = torch.meshgrid(px, py, indexing="xy")
        pix = torch.stack([gx.reshape(-1), gy.reshape(-1)], dim=1)  # (P,2)
        d = pix[None, :, :] - means2d[order][:, None, :]  # (K,P,2)
        q = (
            d[..., 0] ** 2 * inv[order][:, None, 0, 0]
            + 2.0 * d[..., 0] * d[..., 1] * inv[order][:, None, 0, 1]
            + d[..., 1] ** 2 * inv[order][:, None, 1, 1]
        )
        alphas = (opac[order][:, None] * torch.exp(-0.5 * q)).clamp(max=0.999)
        rgb, alpha_map = _composite(order, alphas, colors[order], bg, (h, w), dtype)
        visible = infront
        return RasterOut(rgb.reshape(h, w, 3), alpha_map.reshape(h, w), means2d, visible)

    # sparse splatting path: (gaussian, pixel) pairs within conservative radii,
    # composited per pixel by a segmented log-space transmittance cumsum
    with torch.no_grad():
        eig_max = (
            0.5 * (cov2d[:, 0, 0] + cov2d[:, 1, 1])
            + torch.sqrt(
                (0.5 * (cov2d[:, 0, 0] - cov2d[:, 1, 1])) ** 2 + cov2d[:, 0, 1] ** 2
            )
        )
        # radius where opacity * exp(-0.5 d^2/lambda_max) < alpha_cutoff
        log_ratio = torch.log(opac.clamp_min(1e-12) / alpha_cutoff).clamp_min(0.0)
        radius = torch.sqrt(2.0 * log_ratio * eig_max)
        m2 = means2d.detach()
        x0 = torch.clamp(torch.floor(m2[order][:, 0] - radius[order]), 0, w - 1).long()
        x1 = torch.clamp(torch.floor(m2[order][:, 0] + radius[order]), 0, w - 1).long()
        y0 = torch.clamp(torch.floor(m2[order][:, 1] - radius[order]), 0, h - 1).long()
        y1 = torch.clamp(torch.floor(m2[order][:, 1] + radius[order]), 0, h - 1).long()
        onscreen = (
            (m2[order][:, 0] + radius[order] > 0)
            & (m2[order][:, 0] - radius[order] < w)
            & (m2[order][:, 1] + radius[order] > 0)
            & (m2[order][:, 1] - radius[order] < h)
            & (radius[order] > 0)
        )
    gsel = order[onscreen]
    visible = torch.zeros(len(fld), dtype=torch.bool)
    bg_img = bg.expand(h * w, 3)
    if len(gsel) == 0:
        return RasterOut(
            bg_img.reshape(h, w, 3).clone(), torch.zeros((h, w), dtype=dtype), means2d, visible
        )
    with torch.no_grad():
        bx0, bx1 = x0[onscreen], x1[onscreen]
        by0, by1 = y0[onscreen], y1[onscreen]
        bw = bx1 - bx0 + 1
        bh = by1 - by0 + 1
        counts = bw * bh
        total = int(counts.sum())
        pg = torch.repeat_interleave(torch.arange(len(gsel)), counts)  # index into gsel
        offs = torch.cumsum(counts, dim=0) - counts
        local = torch.arange(total) - offs[pg]
        pxi = bx0[pg] + local % bw[pg]
        pyi = by0[pg] + local // bw[pg]
        pid = pyi * w + pxi
    gidx = gsel[pg]
    # pre-filter pairs below the cutoff with detached values, then sort the
    # survivors by pixel (stable: pairs are generated in depth order)
    ia, ib, ic = inv[:, 0, 0], inv[:, 0, 1], inv[:, 1, 1]
    with torch.no_grad():
        pcx = pxi.to(dtype) + 0.5
        pcy = pyi.to(dtype) + 0.5
        m2x, m2y = m2[:, 0], m2[:, 1]
        dx0 = pcx - m2x[gidx]
        dy0 = pcy - m2y[gidx]
        iad, ibd, icd = ia.detach(), ib.detach(), ic.detach()
        q0 = dx0 * dx0 * iad[gidx] + 2.0 * dx0 * dy0 * ibd[gidx] + dy0 * dy0 * icd[gidx]
        # alpha >= cutoff  <=>  q <= 2 log(opac / cutoff)
        thr = 2.0 * torch.log(opac.detach().clamp_min(1e-12) / alpha_cutoff)
        keep = q0 <= thr[gidx]
        gidx = gidx[keep]
        pid = pid[keep]
        pcx = pcx[keep]
        pcy = pcy[keep]
    if len(pid) == 0:
        return RasterOut(
            bg_img.reshape(h, w, 3).clone(), torch.zeros((h, w), dtype=dtype), means2d, visible
        )
    visible[gidx] = True
    with torch.no_grad():
        srt = torch.from_numpy(np.argsort(pid.numpy(), kind="stable"))
        gidx = gidx[srt]
        pid = pid[srt]
        pcx = pcx[srt]
        pcy = pcy[srt]
    dx = pcx - means2d[gidx, 0]
    dy = pcy - means2d[gidx, 1]
    q = dx * dx * ia[gidx] + 2.0 * dx * dy * ib[gidx] + dy * dy * ic[gidx]
    alphas = (opac[gidx] * torch.exp(-0.5 * q)).clamp(max=0.999)
    with torch.no_grad():
        seg_start = torch.ones(len(pid), dtype=torch.bool)
        seg_start[1:] = pid[1:] != pid[:-1]
        seg_id = torch.cumsum(seg_start.long(), dim=0) - 1
        start_idx = torch.nonzero(seg_start, as_tuple=True)[0]
        seg_pid = pid[start_idx]
    log_t = torch.log1p(-alphas)
    cs = torch.cumsum(log_t, dim=0)
    excl = cs - log_t
    base = excl[start_idx]
    t_excl = torch.exp(excl - base[seg_id])
    weights = alphas * t_excl
    contrib = weights[:, None] * colors[gidx]
    rgb_flat = torch.zeros((h * w, 3), dtype=dtype)
    rgb_flat = rgb_flat.index_add(0, pid, contrib)
    # final transmittance per covered pixel
    with torch.no_grad():
        end_idx = torch.cat([start_idx[1:] - 1, torch.tensor([len(pid) - 1])])
    t_final_seg = torch.exp(cs[end_idx] - base)
    t_final = torch.ones(h * w, dtype=dtype)
    t_final = t_final.index_put((seg_pid,), t_final_seg)
    rgb_flat = rgb_flat + t_final[:, None] * bg_img
    alpha_flat = 1.0 - t_final
    return RasterOut(
        rgb_flat.reshape(h, w, 3), alpha_flat.reshape(h, w), means2d, visible
    )


def backward(
    fld: GaussianField,
    intr: Intrinsics,
    pose: Pose,
    upstream_rgb: torch.Tensor,
    mode: str = "dense",
    **kw,
) -> dict[str, torch.Tensor]:
    """Parameter gradients for a given upstream image gradient, plus the
    per-Gaussian screen-space position gradient magnitude used by
    densification ('mean2d_grad')."""
    fld.requires_grad_(True)
    for p in fld.params.values():
        if p.grad is not None:
            p.grad = None
    out = rasterize(fld, intr, pose, mode=mode, track_means2d=True, **kw)
    (out.rgb * torch.as_tensor(upstream_rgb, dtype=out.rgb.dtype)).sum().backward()
    grads = {k: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
             for k, p in fld.params.items()}
    if out.means2d is not None and out.means2d.grad is not None:
        grads["mean2d_grad"] = out.means2d.grad.norm(dim=1).detach()
    else:
        grads["mean2d_grad"] = torch.zeros(len(fld), dtype=out.rgb.dtype)
    grads["visible"] = out.visible
    fld.requires_grad_(False)
    return grads
