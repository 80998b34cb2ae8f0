"""Anisotropic 3D Gaussian field: parameters, initialization from point clouds,
split/clone densification, and PLY interchange."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ContractError
from ..imageio import read_ply_records, write_ply_fields
from ..pointcloud import PointCloud

SH_C0 = 0.28209479177387814

LOG_SCALE_MIN = math.log(1e-6)
LOG_SCALE_MAX = math.log(1e3)


def n_sh_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


@dataclass
class GaussianField:
    positions: torch.Tensor  # (N,3)
    log_scales: torch.Tensor  # (N,3)
    rotations: torch.Tensor  # (N,4) wxyz, kept unit
    opacity_logits: torch.Tensor  # (N,)
    sh: torch.Tensor  # (N, (deg+1)^2, 3)
    sh_degree: int = 1
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.positions) == 0:
            raise ContractError("Gaussian field must be non-empty")
        if self.sh.shape[1] != n_sh_coeffs(self.sh_degree):
            raise ContractError("sh coefficient count does not match sh_degree")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def params(self) -> dict[str, torch.Tensor]:
        return {
            "positions": self.positions,
            "log_scales": self.log_scales,
            "rotations": self.rotations,
            "opacity_logits": self.opacity_logits,
            "sh": self.sh,
        }

    @property
    def opacities(self) -> torch.Tensor:
        return torch.sigmoid(self.opacity_logits)

    @property
    def scales(self) -> torch.Tensor:
        return torch.exp(self.log_scales)

    def requires_grad_(self, flag: bool = True) -> "GaussianField":
        for p in self.params.values():
            p.requires_grad_(flag)
        return self

    def project_constraints_(self) -> None:
        """Re-normalize quaternions and clamp scales; call after optimizer steps."""
        with torch.no_grad():
            self.rotations /= self.rotations.norm(dim=1, keepdim=True).clamp_min(1e-12)
            self.log_scales.clamp_(LOG_SCALE_MIN, LOG_SCALE_MAX)

    def detach_clone(self) -> "GaussianField":
        return GaussianField(
            *(p.detach().clone() for p in self.params.values()),
            sh_degree=self.sh_degree,
            background=self.background,
        )

    def scene_extent(self) -> float:
        with torch.no_grad():
            return float(self.positions.norm(dim=1).max())

    # -- persistence (3D-GS interchange layout) -----------------------------

    def save_ply(self, path) -> None:
        n = len(self)
        deg = self.sh_degree
        with torch.no_grad():
            sh = self.sh.cpu().numpy()
        fields: dict[str, np.ndarray] = {}
        pos = self.positions.detach().cpu().numpy()
        for i, name in enumerate("xyz"):
            fields[name] = pos[:, i]
        for name in ("nx", "ny", "nz"):
            fields[name] = np.zeros(n)
        for c in range(3):
            fields[f"f_dc_{c}"] = sh[:, 0, c]
        rest = sh[:, 1:, :]  # (N, K-1, 3) -> channel-major like the common layout
        k = rest.shape[1]
        for c in range(3):
            for j in range(k):
                fields[f"f_rest_{c * k + j}"] = rest[:, j, c]
        fields["opacity"] = self.opacity_logits.detach().cpu().numpy()
        ls = self.log_scales.detach().cpu().numpy()
        for i in range(3):
            fields[f"scale_{i}"] = ls[:, i]
        rot = self.rotations.detach().cpu().numpy()
        for i in range(4):
            fields[f"rot_{i}"] = rot[:, i]
        write_ply_fields(path, fields)

    @staticmethod
    def load_ply(path, background=(0.0, 0.0, 0.0)) -> "GaussianField":
        rec = read_ply_records(path)
        names = rec.dtype.names
        n_rest = sum(1 for nm in names if nm.startswith("f_rest_"))
        k_total = 1 + n_rest // 3
        deg = int(math.isqrt(k_total)) - 1
        if n_sh_coeffs(deg) != k_total:
            raise ContractError("f_rest property count is not a valid SH layout")
        n = len(rec)
        sh = np.zeros((n, k_total, 3))
        for c in range(3):
            sh[:, 0, c] = rec[f"f_dc_{c}"]
            for j in range(k_total - 1):
                sh[:, 1 + j, c] = rec[f"f_rest_{c * (k_total - 1) + j}"]
        t = lambda a: torch.tensor(np.asarray(a, np.float64))
        return GaussianField(
            positions=torch.stack([t(rec["x"]), t(rec["y"]), t(rec["z"])], dim=1),
            log_scales=torch.stack([t(rec[f"scale_{i}"]) for i in range(3)], dim=1),
            rotations=torch.stack([t(rec[f"rot_{i}"]) for i in range(4)], dim=1),
            opacity_logits=t(rec["opacity"]),
            sh=torch.tensor(sh),
            sh_degree=deg,
            background=background,
        )


# ---------------------------------------------------------------------------
# initialization


def _mean_knn_distance(points: np.ndarray, k: int = 3) -> np.ndarray:
    from scipy.spatial import cKDTree

    tree = cKDTree(points)
    d, _ = tree.query(points, k=k + 1)  # first neighbor is the point itself
    return d[:, 1:].mean(axis=1)


def init_from_point_cloud(
    pc: PointCloud,
    sh_degree: int = 1,
    opacity: float = 0.1,
    background=(0.0, 0.0, 0.0),
    dtype=torch.float64,
) -> GaussianField:
    """One isotropic Gaussian per point: color in the SH DC term, scale from
    the mean distance to the 3 nearest neighbors."""
    if len(pc) == 0:
        raise ContractError("cannot initialize from an empty point cloud")
    n = len(pc)
    if n > 1:
        dist = np.maximum(_mean_knn_distance(pc.positions, k=min(3, n - 1)), 1e-7)
    else:
        dist = np.full(1, 0.1)
    sh = np.zeros((n, n_sh_coeffs(sh_degree), 3))
    sh[:, 0, :] = (pc.colors - 0.5) / SH_C0
    logit = math.log(opacity / (1.0 - opacity))
    rot = np.zeros((n, 4))
    rot[:, 0] = 1.0
    return GaussianField(
        positions=torch.tensor(pc.positions, dtype=dtype),
        log_scales=torch.tensor(np.log(dist)[:, None].repeat(3, axis=1), dtype=dtype),
        rotations=torch.tensor(rot, dtype=dtype),
        opacity_logits=torch.full((n,), logit, dtype=dtype),
        sh=torch.tensor(sh, dtype=dtype),
        sh_degree=sh_degree,
        background=background,
    )


# ---------------------------------------------------------------------------
# densification


@dataclass
class DensifyStats:
    """Accumulated screen-space position gradient magnitudes per Gaussian."""

    grad_sum: torch.Tensor
    count: torch.Tensor

    @staticmethod
    def zeros(n: int) -> "DensifyStats":
        return DensifyStats(torch.zeros(n), torch.zeros(n))

    def add(self, mean2d_grad_norm: torch.Tensor, touched: torch.Tensor) -> None:
        self.grad_sum += mean2d_grad_norm * touched
        self.count += touched

    def mean_grad(self) -> torch.Tensor:
        return self.grad_sum / self.count.clamp_min(1)


def densify_and_prune(
    fld: GaussianField,
    stats: DensifyStats,
    grad_threshold: float,
    scene_extent: float,
    generator: torch.Generator | None = None,
    opacity_prune: float = 0.005,
    split_scale_frac: float = 0.01,
) -> tuple[GaussianField, dict[str, torch.Tensor]]:
    """Clone small high-gradient Gaussians, split large ones (scales / 1.6),
    prune near-transparent ones.  Opacity is never globally reset.

    Returns the new field plus an index map: `keep` (old indices surviving),
    `copies` (old indices duplicated, appended in order).  The map lets the
    optimizer carry its per-parameter state across the rebuild."""
    with torch.no_grad():
        grads = stats.mean_grad()
        high = grads > grad_threshold
        max_scale = fld.scales.max(dim=1).values
        small = max_scale < split_scale_frac * scene_extent
        clone = high & small
        split = high & ~small
        keep_alive = fld.opacities >= opacity_prune
        # split parents are replaced by their two samples
        keep = torch.nonzero(keep_alive & ~split, as_tuple=True)[0]
        clone_idx = torch.nonzero(keep_alive & clone, as_tuple=True)[0]
        split_idx = torch.nonzero(keep_alive & split, as_tuple=True)[0]

        new_params = {k: [v[keep]] for k, v in fld.params.items()}
        copies = [clone_idx]
        if len(clone_idx):
            for k, v in fld.params.items():
                new_params[k].append(v[clone_idx])
        if len(split_idx):
            for rep in range(2):
                g = generator if generator is not None else torch.Generator().manual_seed(0)
                noise = torch.randn(
                    (len(split_idx), 3), generator=g, dtype=fld.positions.dtype
                )
                from .rasterize import quats_to_rotmats

                rot = quats_to_rotmats(fld.rotations[split_idx])
                offset = torch.einsum(
                    "nij,nj->ni", rot, noise * fld.scales[split_idx]
                )
                for k, v in fld.params.items():
                    pv = v[split_idx].clone()
                    if k == "positions":
                        pv = pv + offset
                    if k == "log_scales":
                        pv = pv - math.log(1.6)
                    new_params[k].append(pv)
                copies.append(split_idx)
        merged = {k: torch.cat(vs, dim=0) for k, vs in new_params.items()}
        out = GaussianField(
            merged["positions"].contiguous(),
            merged["log_scales"].contiguous(),
            merged["rotations"].contiguous(),
            merged["opacity_logits"].contiguous(),
            merged["sh"].contiguous(),
            sh_degree=fld.sh_degree,
            background=fld.background,
        )
        index_map = {"keep": keep, "copies": torch.cat(copies) if copies else torch.zeros(0, dtype=torch.long)}
        return out, index_map
