"""Spherical geometry: equirectangular pixels, unit directions, pinhole cameras,
and icosahedron tangent faces.

Conventions (used everywhere in this package):
  - world frame: right-handed, y up, +z forward
  - panorama: longitude lambda = 2*pi*u/W - pi, latitude phi = pi/2 - pi*v/H,
    direction = (cos phi * sin lambda, sin phi, cos phi * cos lambda)
  - camera frame: x right, y up, z forward (optical axis);
    pixel u = cx + fx * x/z, v = cy - fy * y/z
  - Pose stores world-from-camera rotation as a unit quaternion (w, x, y, z)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, DomainError

# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class PanoDims:
    width: int
    height: int

    def __post_init__(self):
        if self.width != 2 * self.height:
            raise ConfigurationError(
                f"equirectangular raster must be 2:1, got {self.width}x{self.height}"
            )
        if self.height < 1 or self.width % 2 or self.height % 2:
            raise ConfigurationError(f"dims must be even and >= 2: {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass
class Panorama:
    dims: PanoDims
    rgb: np.ndarray  # H x W x 3, float in [0,1]
    depth: np.ndarray | None = None  # H x W, meters, > 0 where valid
    validity: np.ndarray | None = None  # H x W bool

    def __post_init__(self):
        h, w = self.dims.height, self.dims.width
        self.rgb = np.ascontiguousarray(self.rgb, dtype=np.float64)
        if self.rgb.shape != (h, w, 3):
            raise ContractError(f"rgb shape {self.rgb.shape} != {(h, w, 3)}")
        if not np.isfinite(self.rgb).all():
            raise ContractError("rgb contains non-finite values")
        if self.depth is not None:
            self.depth = np.ascontiguousarray(self.depth, dtype=np.float64)
            if self.depth.shape != (h, w):
                raise ContractError(f"depth shape {self.depth.shape} != {(h, w)}")
            valid = self.validity if self.validity is not None else np.ones((h, w), bool)
            d = self.depth[valid]
            if not (np.isfinite(d).all() and (d > 0).all()):
                raise ContractError("depth must be finite and > 0 where valid")

    @property
    def valid_mask(self) -> np.ndarray:
        if self.validity is not None:
            return self.validity
        return np.ones(self.dims.shape, bool)


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigurationError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ConfigurationError("principal point must lie inside the image")

    @staticmethod
    def from_fov(fov_deg: float, width: int, height: int | None = None) -> "Intrinsics":
        """Square-pixel intrinsics with the given horizontal field of view."""
        height = width if height is None else height
        f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return Intrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def _quat_normalize(q: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(q))
    if n == 0.0:
        raise DomainError("zero quaternion")
    return q / n


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (w, x, y, z), w >= 0."""
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(m[i, i] - m[j, j] - m[k, k] + 1.0, 0.0)) * 2
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    if q[0] < 0:
        q = -q
    return _quat_normalize(q)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


@dataclass
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.position = np.asarray(self.position, dtype=np.float64)
        if self.rotation.shape != (4,) or self.position.shape != (3,):
            raise ContractError("Pose expects quaternion (4,) and position (3,)")
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-9:
            raise ContractError("quaternion must be unit norm within 1e-9")

    @property
    def matrix(self) -> np.ndarray:
        """World-from-camera rotation matrix."""
        return quat_to_matrix(self.rotation)

    @staticmethod
    def looking_at(direction: np.ndarray, position: np.ndarray | None = None) -> "Pose":
        """Pose whose optical axis is `direction`, roll-free relative to world up."""
        z = np.asarray(direction, float)
        z = z / np.linalg.norm(z)
        up = np.array([0.0, 1.0, 0.0])
        if abs(float(z @ up)) > 0.999:
            up = np.array([0.0, 0.0, 1.0])
        x = np.cross(up, z)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        m = np.stack([x, y, z], axis=1)
        return Pose(matrix_to_quat(m), np.zeros(3) if position is None else np.asarray(position, float))


@dataclass
class TangentFace:
    index: int
    intrinsics: Intrinsics
    pose: Pose
    image: np.ndarray  # face_res x face_res x C

    def __post_init__(self):
        if not 0 <= self.index < 20:
            raise ContractError("tangent face index must be in 0..19")
        self.image = np.ascontiguousarray(self.image, dtype=np.float64)
        if self.image.ndim == 2:
            self.image = self.image[:, :, None]

    @property
    def axis(self) -> np.ndarray:
        return self.pose.matrix[:, 2]


# ---------------------------------------------------------------------------
# pixel <-> direction


def pixel_to_direction(u, v, dims: PanoDims) -> np.ndarray:
    """Continuous ERP pixel -> unit direction. Accepts scalars or arrays."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(u < 0) or np.any(u > dims.width) or np.any(v < 0) or np.any(v > dims.height):
        raise DomainError("pixel coordinates outside [0,W]x[0,H]")
    lam = 2.0 * math.pi * u / dims.width - math.pi
    phi = math.pi / 2.0 - math.pi * v / dims.height
    cp = np.cos(phi)
    d = np.stack([cp * np.sin(lam), np.sin(phi), cp * np.cos(lam)], axis=-1)
    return d


def direction_to_pixel(direction: np.ndarray, dims: PanoDims) -> tuple[np.ndarray, np.ndarray]:
    """Unit direction -> continuous ERP pixel (u, v); u in [0, W], v in [0, H]."""
    d = np.asarray(direction, dtype=np.float64)
    n = np.linalg.norm(d, axis=-1)
    if np.any(n < 1e-12):
        raise DomainError("zero direction vector")
    if np.any(np.abs(n - 1.0) > 1e-6):
        raise DomainError("direction must be unit norm within 1e-6")
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    lam = np.arctan2(x, z)
    phi = np.arcsin(np.clip(y / n, -1.0, 1.0))
    u = (lam + math.pi) * dims.width / (2.0 * math.pi)
    v = (math.pi / 2.0 - phi) * dims.height / math.pi
    return u, v


# ---------------------------------------------------------------------------
# bilinear sampling


def sample_erp(values: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear sample of an ERP raster at continuous pixels: horizontal wrap,
    vertical clamp. `values` is H x W x C (or H x W)."""
    img = values[:, :, None] if values.ndim == 2 else values
    h, w = img.shape[:2]
    x = np.mod(np.asarray(u, float) - 0.5, w)
    y = np.clip(np.asarray(v, float) - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x1 = (x0 + 1) % w
    y1 = np.minimum(y0 + 1, h - 1)
    out = (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )
    return out[..., 0] if values.ndim == 2 else out


def sample_clamped(values: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear sample of a perspective raster, clamped at all borders."""
    img = values[:, :, None] if values.ndim == 2 else values
    h, w = img.shape[:2]
    x = np.clip(np.asarray(u, float) - 0.5, 0.0, w - 1.0)
    y = np.clip(np.asarray(v, float) - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    out = (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )
    return out[..., 0] if values.ndim == 2 else out


# ---------------------------------------------------------------------------
# perspective projection from the sphere center


def camera_rays(intr: Intrinsics, pose: Pose) -> np.ndarray:
    """World-frame ray directions through every pixel center, H x W x 3 (unit)."""
    us = (np.arange(intr.width) + 0.5 - intr.cx) / intr.fx
    vs = -(np.arange(intr.height) + 0.5 - intr.cy) / intr.fy
    xx, yy = np.meshgrid(us, vs)
    d_cam = np.stack([xx, yy, np.ones_like(xx)], axis=-1)
    d_cam /= np.linalg.norm(d_cam, axis=-1, keepdims=True)
    return d_cam @ pose.matrix.T


def erp_to_perspective(pano: Panorama, intr: Intrinsics, pose: Pose) -> np.ndarray:
    """Render a pinhole view of the panorama from the sphere center."""
    if np.linalg.norm(pose.position) > 1e-12:
        raise ContractError("panorama can only be sampled from the sphere center (origin)")
    d = camera_rays(intr, pose)
    u, v = direction_to_pixel(d, pano.dims)
    return sample_erp(pano.rgb, u, v)


# ---------------------------------------------------------------------------
# icosahedron tangent faces

_PHI = (1.0 + math.sqrt(5.0)) / 2.0


def icosahedron_face_directions() -> np.ndarray:
    """The 20 unit face-center directions of a regular icosahedron, stable order."""
    verts = []
    for a in (-1.0, 1.0):
        for b in (-_PHI, _PHI):
            verts.append((0.0, a, b))
            verts.append((a, b, 0.0))
            verts.append((b, 0.0, a))
    verts = np.array(verts)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    edge = 2.0 / math.sqrt(1.0 + _PHI * _PHI)  # chord length of icosahedron edge
    faces = []
    for i in range(12):
        for j in range(i + 1, 12):
            if abs(np.linalg.norm(verts[i] - verts[j]) - edge) > 1e-9:
                continue
            for k in range(j + 1, 12):
                if (
                    abs(np.linalg.norm(verts[i] - verts[k]) - edge) < 1e-9
                    and abs(np.linalg.norm(verts[j] - verts[k]) - edge) < 1e-9
                ):
                    faces.append((i, j, k))
    assert len(faces) == 20
    centers = np.array([verts[list(f)].mean(axis=0) for f in faces])
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    return centers


def icosahedron_face_half_fov() -> float:
    """Angle in degrees from a face center to its farthest vertex."""
    # center-to-vertex angle of the icosahedron's spherical triangle
    verts = np.array([0.0, 1.0, _PHI])
    verts /= np.linalg.norm(verts)
    centers = icosahedron_face_directions()
    cosang = centers @ verts
    return math.degrees(math.acos(np.max(cosang)))


def tangent_face_cameras(face_res: int, fov_margin_deg: float) -> list[tuple[Intrinsics, Pose]]:
    if face_res < 8:
        raise ConfigurationError("face_res must be >= 8")
    if fov_margin_deg <= 0:
        raise ConfigurationError("fov_margin must be > 0 so adjacent faces overlap")
    half = icosahedron_face_half_fov() + fov_margin_deg
    if half >= 90.0:
        raise ConfigurationError("fov_margin too large: face FOV reaches 180 degrees")
    intr = Intrinsics.from_fov(2.0 * half, face_res)
    return [(intr, Pose.looking_at(c)) for c in icosahedron_face_directions()]


def icosahedron_tangent_project(
    pano: Panorama, face_res: int, fov_margin_deg: float = 12.0
) -> list[TangentFace]:
    """Gnomonic projection of the panorama onto the 20 icosahedron tangent planes."""
    faces = []
    for idx, (intr, pose) in enumerate(tangent_face_cameras(face_res, fov_margin_deg)):
        img = erp_to_perspective(pano, intr, pose)
        faces.append(TangentFace(index=idx, intrinsics=intr, pose=pose, image=img))
    return faces


# ---------------------------------------------------------------------------
# tangent -> ERP accumulation


@dataclass
class PanoAccumulator:
    """Weighted splat accumulator over a panorama raster: (sum w*value, sum w)."""

    dims: PanoDims
    channels: int = 1
    value_sum: np.ndarray = None
    weight_sum: np.ndarray = None

    def __post_init__(self):
        h, w = self.dims.shape
        if self.value_sum is None:
            self.value_sum = np.zeros((h, w, self.channels))
        if self.weight_sum is None:
            self.weight_sum = np.zeros((h, w))

    def normalized(self, fill: float = np.nan) -> np.ndarray:
        out = np.full_like(self.value_sum, fill)
        covered = self.weight_sum > 0
        out[covered] = self.value_sum[covered] / self.weight_sum[covered, None]
        return out[..., 0] if self.channels == 1 else out


def face_pixel_coords(
    intr: Intrinsics, pose: Pose, dims: PanoDims
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For every pano pixel center: (inside-frustum mask, face u, face v)."""
    h, w = dims.shape
    uu, vv = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    d_world = pixel_to_direction(uu, vv, dims)
    d_cam = d_world @ pose.matrix  # R^T applied row-wise
    z = d_cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        fu = intr.cx + intr.fx * d_cam[..., 0] / z
        fv = intr.cy - intr.fy * d_cam[..., 1] / z
    inside = (z > 0) & (fu >= 0) & (fu <= intr.width) & (fv >= 0) & (fv <= intr.height)
    return inside, fu, fv


def tangent_to_erp_accumulate(
    face: TangentFace, weights: np.ndarray, acc: PanoAccumulator
) -> PanoAccumulator:
    """Splat a tangent face into a panorama accumulator with per-face-pixel weights."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != face.image.shape[:2]:
        raise ContractError("weights must match the face image resolution")
    if np.any(weights < 0):
        raise ContractError("weights must be non-negative")
    inside, fu, fv = face_pixel_coords(face.intrinsics, face.pose, acc.dims)
    if not inside.any():
        return acc
    vals = sample_clamped(face.image, fu[inside], fv[inside])
    ws = sample_clamped(weights, fu[inside], fv[inside])
    acc.value_sum[inside] += ws[:, None] * vals
    acc.weight_sum[inside] += ws
    return acc
