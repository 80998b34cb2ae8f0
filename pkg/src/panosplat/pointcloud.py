"""Reverse ERP projection to point clouds, depth-gradient filtering,
downsampling, and z-buffered point splatting to perspective views."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, DomainError
from .geometry import Intrinsics, PanoDims, Panorama, Pose, pixel_to_direction
from .imageio import read_point_ply, write_point_ply


@dataclass
class PointCloud:
    positions: np.ndarray  # N x 3 world meters
    colors: np.ndarray  # N x 3 in [0,1]
    source_pixels: np.ndarray  # N x 2 integer (u, v) pano coordinates

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, np.float64)
        self.colors = np.ascontiguousarray(self.colors, np.float64)
        self.source_pixels = np.ascontiguousarray(self.source_pixels, np.int64)
        if not np.isfinite(self.positions).all():
            raise ContractError("point positions must be finite")

    def __len__(self) -> int:
        return len(self.positions)

    def subset(self, mask_or_idx) -> "PointCloud":
        return PointCloud(
            self.positions[mask_or_idx],
            self.colors[mask_or_idx],
            self.source_pixels[mask_or_idx],
        )

    def save_ply(self, path) -> None:
        write_point_ply(path, self.positions, self.colors)

    @staticmethod
    def load_ply(path) -> "PointCloud":
        pos, col = read_point_ply(path)
        return PointCloud(pos, col, np.zeros((len(pos), 2), np.int64))


@dataclass
class ViewImage:
    rgb: np.ndarray  # h x w x 3
    mask: np.ndarray  # h x w bool, True = missing
    pose: Pose
    intrinsics: Intrinsics


# ---------------------------------------------------------------------------


def reverse_erp_project(pano: Panorama) -> PointCloud:
    """One world point per valid pano pixel: direction(center) * depth."""
    if pano.depth is None:
        raise ContractError("panorama has no depth channel")
    h, w = pano.dims.shape
    valid = pano.valid_mask
    vs, us = np.nonzero(valid)
    dirs = pixel_to_direction(us + 0.5, vs + 0.5, pano.dims)
    positions = dirs * pano.depth[vs, us][:, None]
    colors = pano.rgb[vs, us]
    return PointCloud(positions, colors, np.stack([us, vs], axis=1))


def depth_gradient_filter(depth: np.ndarray, threshold: float = 0.4,
                          normalized: bool = True) -> np.ndarray:
    """Keep-mask where the central-difference depth gradient magnitude (divided
    by local depth when `normalized`) stays at or below `threshold`."""
    if threshold <= 0:
        raise DomainError("threshold must be > 0")
    d = np.asarray(depth, np.float64)
    gx = np.zeros_like(d)
    gy = np.zeros_like(d)
    # horizontal wrap, vertical clamp (one-sided at top/bottom rows)
    gx = (np.roll(d, -1, axis=1) - np.roll(d, 1, axis=1)) / 2.0
    gy[1:-1] = (d[2:] - d[:-2]) / 2.0
    gy[0] = d[1] - d[0]
    gy[-1] = d[-1] - d[-2]
    g = np.hypot(gx, gy)
    if normalized:
        g = g / d
    return g <= threshold


def filtered_point_cloud(pano: Panorama, threshold: float = 0.4,
                         normalized: bool = True) -> PointCloud:
    keep = depth_gradient_filter(pano.depth, threshold, normalized)
    valid = pano.valid_mask & keep
    return reverse_erp_project(
        Panorama(pano.dims, pano.rgb, pano.depth, validity=valid)
    )


def downsample(pano: Panorama, target: PanoDims) -> Panorama:
    """Area-average RGB; nearest-center depth (depth averaging across object
    edges would fabricate phantom points)."""
    h, w = pano.dims.shape
    th, tw = target.shape
    if h % th or w % tw:
        raise ConfigurationError(f"target {tw}x{th} must divide source {w}x{h}")
    ky, kx = h // th, w // tw
    rgb = pano.rgb.reshape(th, ky, tw, kx, 3).mean(axis=(1, 3))
    depth = None
    if pano.depth is not None:
        # nearest to the target pixel center within each block
        oy, ox = (ky - 1) // 2, (kx - 1) // 2
        depth = pano.depth[oy::ky, ox::kx]
    return Panorama(target, rgb, depth)


# ---------------------------------------------------------------------------
# z-buffered point projection


def project_points(pc: PointCloud, intr: Intrinsics, pose: Pose,
                   point_radius: float = 1.0, z_near: float = 0.05) -> ViewImage:
    """Splat points as discs with z-buffering (nearest wins, ties to the lower
    point index).  Deterministic regardless of input chunking."""
    if point_radius < 0.5:
        raise ContractError("point_radius must be >= 0.5")
    h, w = intr.height, intr.width
    rgb = np.zeros((h, w, 3))
    mask = np.ones((h, w), bool)
    if len(pc) == 0:
        return ViewImage(rgb, mask, pose, intr)
    r_wc = pose.matrix
    cam = (pc.positions - pose.position) @ r_wc  # world -> camera
    z = cam[:, 2]
    front = z > z_near
    if not front.any():
        return ViewImage(rgb, mask, pose, intr)
    idx = np.flatnonzero(front)
    u = intr.cx + intr.fx * cam[idx, 0] / z[idx]
    v = intr.cy - intr.fy * cam[idx, 1] / z[idx]
    zf = z[idx]
    # disc footprint: pixel centers within point_radius of the projected point
    r = int(np.ceil(point_radius - 0.5))
    offs = [
        (dy, dx)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dx * dx + dy * dy <= point_radius * point_radius
    ]
    px = np.floor(u).astype(np.int64)
    py = np.floor(v).astype(np.int64)
    pix_ids, depths, orders = [], [], []
    for dy, dx in offs:
        qx = px + dx
        qy = py + dy
        ok = (qx >= 0) & (qx < w) & (qy >= 0) & (qy < h)
        cx = qx[ok] + 0.5
        cy = qy[ok] + 0.5
        near = (cx - u[ok]) ** 2 + (cy - v[ok]) ** 2 <= point_radius**2
        sel = np.flatnonzero(ok)[near]
        pix_ids.append(qy[sel] * w + qx[sel])
        depths.append(zf[sel])
        orders.append(idx[sel])
    pix_ids = np.concatenate(pix_ids)
    depths = np.concatenate(depths)
    orders = np.concatenate(orders)
    if len(pix_ids) == 0:
        return ViewImage(rgb, mask, pose, intr)
    # winner per pixel: smallest (depth, index)
    srt = np.lexsort((orders, depths, pix_ids))
    pix_sorted = pix_ids[srt]
    first = np.ones(len(srt), bool)
    first[1:] = pix_sorted[1:] != pix_sorted[:-1]
    win_pix = pix_sorted[first]
    win_pt = orders[srt][first]
    rgb.reshape(-1, 3)[win_pix] = pc.colors[win_pt]
    mask.reshape(-1)[win_pix] = False
    return ViewImage(rgb, mask, pose, intr)
