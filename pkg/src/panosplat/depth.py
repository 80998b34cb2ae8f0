"""Panorama depth estimation: per-face disparity, global affine alignment,
frustum blending, and metric least-squares calibration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .adapters import CameraView
from .errors import AdapterError, CalibrationError, ContractError, DomainError
from .geometry import (
    Intrinsics,
    PanoAccumulator,
    PanoDims,
    Panorama,
    Pose,
    TangentFace,
    face_pixel_coords,
    icosahedron_tangent_project,
    sample_clamped,
    tangent_face_cameras,
    tangent_to_erp_accumulate,
)

N_FACES = 20


@dataclass
class FaceDisparity:
    face_index: int
    disparity: np.ndarray  # face_res x face_res, relative
    intrinsics: Intrinsics
    pose: Pose
    scale: float = 1.0
    offset: float = 0.0

    @property
    def aligned(self) -> np.ndarray:
        return self.scale * self.disparity + self.offset


@dataclass(frozen=True)
class CalibrationResult:
    scale: float
    offset: float
    residual_rms: float
    n_samples: int


@dataclass(frozen=True)
class DepthFusionConfig:
    working_dims: PanoDims = field(default_factory=lambda: PanoDims(4096, 2048))
    face_res: int = 256
    fov_margin_deg: float = 12.0
    n_calibration_faces: int = 5
    seed: int = 0
    d_min: float = 0.1
    d_max: float = 100.0
    overlap_samples_per_pair: int = 400


# ---------------------------------------------------------------------------


def estimate_face_disparities(pano: Panorama, depth_client, face_res: int,
                              fov_margin_deg: float = 12.0) -> list[FaceDisparity]:
    """Tangent-project the panorama and query the relative-depth adapter per face."""
    faces = icosahedron_tangent_project(pano, face_res, fov_margin_deg)
    out = []
    for f in faces:
        try:
            disp = np.asarray(
                depth_client.disparity(
                    f.image, camera=CameraView(f.intrinsics, f.pose, tag=f.index)
                ),
                np.float64,
            )
        except AdapterError:
            raise
        except Exception as exc:
            raise AdapterError(f"depth adapter failed on face {f.index}: {exc}") from exc
        if disp.shape != (face_res, face_res):
            raise ContractError(
                f"face {f.index}: adapter returned {disp.shape}, expected {(face_res, face_res)}"
            )
        if not np.isfinite(disp).all():
            raise ContractError(f"face {f.index}: adapter returned non-finite disparity")
        out.append(FaceDisparity(f.index, disp, f.intrinsics, f.pose))
    return out


# ---------------------------------------------------------------------------
# overlap correspondences and global alignment


@dataclass(frozen=True)
class OverlapPairs:
    """Per face-pair disparity samples at shared pano pixels."""

    face_i: np.ndarray  # (M,) int
    face_j: np.ndarray  # (M,) int
    disp_i: np.ndarray  # (M,)
    disp_j: np.ndarray  # (M,)


def sample_overlaps(faces: list[FaceDisparity], dims: PanoDims,
                    samples_per_pair: int = 400, seed: int = 0) -> OverlapPairs:
    """Sample pano pixels covered by >= 2 faces and read both faces' disparities."""
    h, w = dims.shape
    inside = np.zeros((N_FACES, h, w), bool)
    fus = np.zeros((N_FACES, h, w))
    fvs = np.zeros((N_FACES, h, w))
    for k, f in enumerate(faces):
        inside[k], fus[k], fvs[k] = face_pixel_coords(f.intrinsics, f.pose, dims)
    rng = np.random.default_rng(seed)
    fi, fj, di, dj = [], [], [], []
    for a in range(N_FACES):
        for b in range(a + 1, N_FACES):
            both = inside[a] & inside[b]
            idx = np.flatnonzero(both)
            if idx.size == 0:
                continue
            if idx.size > samples_per_pair:
                idx = rng.choice(idx, samples_per_pair, replace=False)
            ys, xs = np.unravel_index(idx, (h, w))
            di.append(sample_clamped(faces[a].disparity, fus[a][ys, xs], fvs[a][ys, xs]))
            dj.append(sample_clamped(faces[b].disparity, fus[b][ys, xs], fvs[b][ys, xs]))
            fi.append(np.full(idx.size, a))
            fj.append(np.full(idx.size, b))
    if not fi:
        raise ContractError("no overlapping face pairs found")
    return OverlapPairs(
        np.concatenate(fi), np.concatenate(fj), np.concatenate(di), np.concatenate(dj)
    )


def _connected_components(pairs: OverlapPairs) -> list[list[int]]:
    parent = list(range(N_FACES))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in zip(pairs.face_i, pairs.face_j):
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
    groups: dict[int, list[int]] = {}
    for k in range(N_FACES):
        groups.setdefault(find(k), []).append(k)
    return list(groups.values())


def align_faces(faces: list[FaceDisparity], overlaps: OverlapPairs) -> list[FaceDisparity]:
    """Solve per-face (scale, offset) minimizing cross-face disagreement at
    overlap samples, with gauge mean(scale)=1, mean(offset)=0.  Deterministic
    closed-form normal-equations solve."""
    comps = _connected_components(overlaps)
    if len(comps) > 1:
        raise ContractError(f"overlap graph is disconnected: components {comps}")
    counts = np.bincount(
        np.concatenate([overlaps.face_i, overlaps.face_j]), minlength=N_FACES
    )
    if counts.min() < 100:
        raise ContractError(
            f"every face needs >= 100 overlap samples; face {int(counts.argmin())} has {int(counts.min())}"
        )
    # unknowns x = [s_0..s_19, o_0..o_19]; rows s_i d_i + o_i - s_j d_j - o_j = 0
    m = len(overlaps.disp_i)
    ata = np.zeros((2 * N_FACES, 2 * N_FACES))
    rows_i = overlaps.face_i.astype(int)
    rows_j = overlaps.face_j.astype(int)
    cols = np.stack([rows_i, N_FACES + rows_i, rows_j, N_FACES + rows_j], axis=1)
    vals = np.stack(
        [overlaps.disp_i, np.ones(m), -overlaps.disp_j, -np.ones(m)], axis=1
    )
    for p in range(4):
        for q in range(4):
            np.add.at(ata, (cols[:, p], cols[:, q]), vals[:, p] * vals[:, q])
    c = np.zeros((2, 2 * N_FACES))
    c[0, :N_FACES] = 1.0
    c[1, N_FACES:] = 1.0
    kkt = np.zeros((2 * N_FACES + 2, 2 * N_FACES + 2))
    kkt[: 2 * N_FACES, : 2 * N_FACES] = 2.0 * ata
    kkt[: 2 * N_FACES, 2 * N_FACES :] = c.T
    kkt[2 * N_FACES :, : 2 * N_FACES] = c
    rhs = np.zeros(2 * N_FACES + 2)
    rhs[2 * N_FACES] = float(N_FACES)  # sum of scales = 20  <=>  mean 1
    if np.linalg.matrix_rank(kkt, tol=1e-8 * np.abs(kkt).max()) < kkt.shape[0]:
        raise ContractError("alignment system is rank-deficient (degenerate disparities)")
    sol = np.linalg.solve(kkt, rhs)
    return [
        replace(f, scale=float(sol[k]), offset=float(sol[N_FACES + k]))
        for k, f in enumerate(faces)
    ]


def alignment_residual_rms(faces: list[FaceDisparity], overlaps: OverlapPairs) -> float:
    s = np.array([f.scale for f in faces])
    o = np.array([f.offset for f in faces])
    i, j = overlaps.face_i.astype(int), overlaps.face_j.astype(int)
    r = s[i] * overlaps.disp_i + o[i] - s[j] * overlaps.disp_j - o[j]
    return float(np.sqrt(np.mean(r**2)))


# ---------------------------------------------------------------------------
# frustum blending


def frustum_weights(intr: Intrinsics) -> np.ndarray:
    """Product of distances to the four image borders, normalized to peak 1."""
    x = np.arange(intr.width) + 0.5
    y = np.arange(intr.height) + 0.5
    wx = x * (intr.width - x)
    wy = y * (intr.height - y)
    w = np.outer(wy, wx)
    return w / w.max()


def frustum_blend(faces: list[FaceDisparity], dims: PanoDims) -> np.ndarray:
    """Blend aligned face disparities into a panorama disparity map."""
    acc = PanoAccumulator(dims=dims, channels=1)
    for f in faces:
        tf = TangentFace(f.face_index, f.intrinsics, f.pose, f.aligned)
        tangent_to_erp_accumulate(tf, frustum_weights(f.intrinsics), acc)
    if (acc.weight_sum <= 0).any():
        ys, xs = np.nonzero(acc.weight_sum <= 0)
        raise ContractError(
            f"{len(ys)} pano pixels uncovered by any face, first at (u={xs[0]}, v={ys[0]})"
        )
    return acc.normalized()


# ---------------------------------------------------------------------------
# metric calibration


def disparity_to_depth(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, np.float64)
    if np.any(d <= 0):
        raise DomainError("disparity must be > 0")
    return 1.0 / d


def depth_to_disparity(depth: np.ndarray) -> np.ndarray:
    depth = np.asarray(depth, np.float64)
    if np.any(depth <= 0):
        raise DomainError("depth must be > 0")
    return 1.0 / depth


def solve_affine(d_src: np.ndarray, d_ref: np.ndarray) -> tuple[float, float, float]:
    """Closed-form least squares of s*d_src + o ~= d_ref; returns (s, o, rms)."""
    d = np.asarray(d_src, np.float64).ravel()
    r = np.asarray(d_ref, np.float64).ravel()
    a = np.array([[float(d @ d), float(d.sum())], [float(d.sum()), float(len(d))]])
    b = np.array([float(d @ r), float(r.sum())])
    s, o = np.linalg.solve(a, b)
    rms = float(np.sqrt(np.mean((s * d + o - r) ** 2)))
    return float(s), float(o), rms


def calibrate_metric(
    pano: Panorama,
    pano_disparity: np.ndarray,
    metric_client,
    n_faces: int = 5,
    rng_seed: int = 0,
    face_res: int = 256,
    fov_margin_deg: float = 12.0,
    d_min: float = 0.1,
    d_max: float = 100.0,
) -> tuple[CalibrationResult, np.ndarray]:
    """Fit a global (scale, offset) mapping the blended disparity onto metric
    reference disparity from a seeded-random subset of tangent faces; returns
    the calibration and the clamped metric depth panorama."""
    if not 1 <= n_faces <= N_FACES:
        raise ContractError("n_faces must be in 1..20")
    rng = np.random.default_rng(rng_seed)
    chosen = sorted(rng.choice(N_FACES, size=n_faces, replace=False).tolist())
    cams = tangent_face_cameras(face_res, fov_margin_deg)
    faces = icosahedron_tangent_project(pano, face_res, fov_margin_deg)
    src, ref = [], []
    for idx in chosen:
        intr, pose = cams[idx]
        try:
            depth_ref = np.asarray(
                metric_client.depth_map(
                    faces[idx].image, camera=CameraView(intr, pose, tag=idx)
                ),
                np.float64,
            )
        except AdapterError:
            raise
        except Exception as exc:
            raise AdapterError(f"metric adapter failed on face {idx}: {exc}") from exc
        if depth_ref.shape != (face_res, face_res):
            raise ContractError(
                f"face {idx}: metric adapter returned {depth_ref.shape}, expected {(face_res, face_res)}"
            )
        inside, fu, fv = face_pixel_coords(intr, pose, pano.dims)
        uu = np.nonzero(inside)
        # pano pixels inside the face: reference disparity sampled in face space
        d_face = sample_clamped(depth_to_disparity(depth_ref), fu[inside], fv[inside])
        src.append(pano_disparity[uu])
        ref.append(d_face)
    d_src = np.concatenate(src)
    d_ref = np.concatenate(ref)
    s, o, rms = solve_affine(d_src, d_ref)
    if s <= 0:
        raise CalibrationError(f"calibration produced non-positive scale {s}")
    mapped = s * pano_disparity + o
    bad = float(np.mean(mapped <= 0))
    if bad > 0.01:
        raise CalibrationError(f"{bad:.1%} of pixels map to non-positive disparity")
    depth = 1.0 / np.maximum(mapped, 1e-12)
    depth = np.clip(depth, d_min, d_max)
    return CalibrationResult(s, o, rms, int(len(d_src))), depth


# ---------------------------------------------------------------------------
# end-to-end


def estimate_panorama_depth(
    pano: Panorama, depth_client, metric_client, cfg: DepthFusionConfig = DepthFusionConfig()
) -> tuple[Panorama, CalibrationResult]:
    """Full fusion: per-face disparity -> alignment -> frustum blend -> metric
    calibration.  Returns the panorama with its metric depth attached."""
    faces = estimate_face_disparities(pano, depth_client, cfg.face_res, cfg.fov_margin_deg)
    overlaps = sample_overlaps(
        faces, pano.dims, cfg.overlap_samples_per_pair, seed=cfg.seed
    )
    faces = align_faces(faces, overlaps)
    pano_disp = frustum_blend(faces, pano.dims)
    calib, depth = calibrate_metric(
        pano,
        pano_disp,
        metric_client,
        n_faces=cfg.n_calibration_faces,
        rng_seed=cfg.seed,
        face_res=cfg.face_res,
        fov_margin_deg=cfg.fov_margin_deg,
        d_min=cfg.d_min,
        d_max=cfg.d_max,
    )
    return Panorama(dims=pano.dims, rgb=pano.rgb, depth=depth), calib
