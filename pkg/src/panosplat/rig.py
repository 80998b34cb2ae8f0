"""Base/supplementary camera rigs and the PANO / PCD / INP supervision sets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .adapters import checked_fill
from .errors import AdapterError, ConfigurationError, ContractError
from .geometry import (
    Intrinsics,
    Panorama,
    Pose,
    erp_to_perspective,
    quat_multiply,
)
from .pointcloud import PointCloud, project_points

# ring elevations (degrees) and view counts; sums to the 38 base views
BASE_RINGS: tuple[tuple[float, int], ...] = (
    (90.0, 1),
    (60.0, 6),
    (30.0, 8),
    (0.0, 8),
    (-30.0, 8),
    (-60.0, 6),
    (-90.0, 1),
)


@dataclass(frozen=True)
class RigConfig:
    n_base: int = 38
    n_supp_per_base: int = 4
    image_size: int = 512
    fov_deg: float = 90.0
    supp_translation: float = 0.15
    supp_rotation_deg: float = 10.0

    def __post_init__(self):
        if self.n_base < 6:
            raise ConfigurationError("n_base must be >= 6")
        if self.n_supp_per_base not in (0, 4):
            raise ConfigurationError("n_supp_per_base must be 0 or 4")
        if not 30.0 <= self.fov_deg <= 120.0:
            raise ConfigurationError("fov must be within [30, 120] degrees")
        if self.image_size < 8:
            raise ConfigurationError("image_size must be >= 8")
        if self.supp_translation < 0.0:
            raise ConfigurationError("supp_translation must be non-negative")


@dataclass
class SupervisionItem:
    pose: Pose
    intrinsics: Intrinsics
    rgb: np.ndarray
    mask: np.ndarray | None = None


@dataclass
class SupervisionSet:
    name: str  # PANO | PCD | INP
    items: list[SupervisionItem]

    def __post_init__(self):
        if self.name not in ("PANO", "PCD", "INP"):
            raise ContractError(f"unknown supervision set name '{self.name}'")
        for it in self.items:
            if self.name == "PANO" and it.mask is not None:
                raise ContractError("PANO items carry no mask")
            if self.name in ("PCD", "INP") and it.mask is None:
                raise ContractError(f"{self.name} items must carry masks")
            if it.intrinsics != self.items[0].intrinsics:
                raise ContractError("all intrinsics within a set must be identical")

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class CameraRig:
    intrinsics: Intrinsics
    base_poses: list[Pose]
    supp_poses: list[list[Pose]]  # per base camera
    config: RigConfig = field(default_factory=RigConfig)

    @property
    def all_supplementary(self) -> list[Pose]:
        return [p for group in self.supp_poses for p in group]


# ---------------------------------------------------------------------------


def build_base_rig(cfg: RigConfig = RigConfig()) -> tuple[list[Pose], Intrinsics]:
    """The origin-centered sphere-covering base views on fixed elevation rings,
    azimuths evenly spaced with alternating half-step stagger."""
    ring_sum = sum(n for _, n in BASE_RINGS)
    if cfg.n_base != ring_sum:
        raise ConfigurationError(
            f"n_base {cfg.n_base} does not match the fixed ring layout total {ring_sum}"
        )
    poses = []
    for ring_idx, (elev, count) in enumerate(BASE_RINGS):
        stagger = 0.5 if ring_idx % 2 else 0.0
        for k in range(count):
            az = 2.0 * math.pi * (k + stagger) / count
            el = math.radians(elev)
            d = np.array([math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)])
            poses.append(Pose.looking_at(d))
    intr = Intrinsics.from_fov(cfg.fov_deg, cfg.image_size)
    return poses, intr


def _axis_angle_quat(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    h = angle_rad / 2.0
    return np.array([math.cos(h), *(math.sin(h) * axis)])


# (translation direction in camera frame, rotation axis, rotation sign)
_SUPP_MOVES = (
    ("up", np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]), -1.0),
    ("down", np.array([0.0, -1.0, 0.0]), np.array([1.0, 0.0, 0.0]), 1.0),
    ("left", np.array([-1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), -1.0),
    ("right", np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), 1.0),
)


def build_supplementary(base: Pose, cfg: RigConfig = RigConfig()) -> list[Pose]:
    """Four cameras offset up/down/left/right of the base in its own frame,
    each re-oriented toward its offset direction."""
    if cfg.n_supp_per_base != 4:
        raise ConfigurationError("supplementary construction expects n_supp_per_base = 4")
    r = base.matrix
    out = []
    for _name, tdir, axis, sign in _SUPP_MOVES:
        pos = base.position + cfg.supp_translation * (r @ tdir)
        local = _axis_angle_quat(axis, sign * math.radians(cfg.supp_rotation_deg))
        out.append(Pose(quat_multiply(base.rotation, local), pos))
    return out


def build_rig(cfg: RigConfig = RigConfig()) -> CameraRig:
    base_poses, intr = build_base_rig(cfg)
    supp = (
        [build_supplementary(p, cfg) for p in base_poses]
        if cfg.n_supp_per_base
        else [[] for _ in base_poses]
    )
    return CameraRig(intr, base_poses, supp, cfg)


# ---------------------------------------------------------------------------
# supervision sets


def build_pano_set(pano: Panorama, rig: CameraRig) -> SupervisionSet:
    items = [
        SupervisionItem(pose, rig.intrinsics, erp_to_perspective(pano, rig.intrinsics, pose))
        for pose in rig.base_poses
    ]
    return SupervisionSet("PANO", items)


def build_pcd_set(points: PointCloud, rig: CameraRig, point_radius: float = 1.0,
                  z_near: float = 0.05) -> SupervisionSet:
    items = []
    for pose in rig.all_supplementary:
        view = project_points(points, rig.intrinsics, pose, point_radius, z_near)
        items.append(SupervisionItem(pose, rig.intrinsics, view.rgb, view.mask))
    return SupervisionSet("PCD", items)


def build_inp_set(render_fn, rig: CameraRig, pcd_set: SupervisionSet,
                  inpaint_client) -> SupervisionSet:
    """Render the pre-optimized field at every supplementary pose and fill the
    PCD-mask holes with the inpaint adapter.  `render_fn(intr, pose) -> rgb`.

    Pixels outside the mask stay bit-identical to the render (adapter contract,
    enforced per call)."""
    if len(pcd_set) != len(rig.all_supplementary):
        raise ContractError("PCD set size does not match supplementary camera count")
    items = []
    for k, (pose, pcd_item) in enumerate(zip(rig.all_supplementary, pcd_set.items)):
        render = np.clip(render_fn(rig.intrinsics, pose), 0.0, 1.0)
        mask = pcd_item.mask
        try:
            filled = checked_fill(inpaint_client, render, mask) if mask.any() else render
        except ContractError:
            raise
        except AdapterError as exc:
            raise AdapterError(f"inpaint failed on supplementary view {k}: {exc}") from exc
        items.append(SupervisionItem(pose, rig.intrinsics, filled, mask))
    return SupervisionSet("INP", items)


# ---------------------------------------------------------------------------
# serialization


def rig_to_json(rig: CameraRig) -> str:
    intr = rig.intrinsics
    cameras = []
    for i, pose in enumerate(rig.base_poses):
        cameras.append(
            {
                "id": f"base_{i:03d}",
                "kind": "base",
                "parent": None,
                "q": [float(x) for x in pose.rotation],
                "t": [float(x) for x in pose.position],
            }
        )
        for j, sp in enumerate(rig.supp_poses[i]):
            cameras.append(
                {
                    "id": f"supp_{i:03d}_{j}",
                    "kind": "supp",
                    "parent": f"base_{i:03d}",
                    "q": [float(x) for x in sp.rotation],
                    "t": [float(x) for x in sp.position],
                }
            )
    doc = {
        "intrinsics": {
            "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
            "w": intr.width, "h": intr.height,
        },
        "cameras": cameras,
    }
    return json.dumps(doc, indent=2)


def rig_from_json(text: str, cfg: RigConfig = RigConfig()) -> CameraRig:
    doc = json.loads(text)
    i = doc["intrinsics"]
    intr = Intrinsics(i["fx"], i["fy"], i["cx"], i["cy"], i["w"], i["h"])
    base, supp = [], {}
    for cam in doc["cameras"]:
        pose = Pose(np.array(cam["q"]), np.array(cam["t"]))
        if cam["kind"] == "base":
            base.append(pose)
            supp[cam["id"]] = []
        else:
            supp[cam["parent"]].append(pose)
    groups = [supp[f"base_{i:03d}"] for i in range(len(base))]
    return CameraRig(intr, base, groups, cfg)
