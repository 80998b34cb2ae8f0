"""JSON pipeline configuration: schema validation, defaults, and the desk-scale
preset used by tests and quick runs."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .adapters import KINDS, AdapterEndpoint
from .depth import DepthFusionConfig
from .errors import ConfigurationError
from .geometry import PanoDims
from .panorama import GenerationLadderConfig
from .rig import RigConfig
from .splat.optimize import OptimizationSchedule


@dataclass(frozen=True)
class PointCloudConfig:
    source_dims: PanoDims = field(default_factory=lambda: PanoDims(2048, 1024))
    sparse_dims: PanoDims = field(default_factory=lambda: PanoDims(1024, 512))
    gradient_threshold: float = 0.4
    normalized_gradient: bool = True
    point_radius: float = 1.0
    z_near: float = 0.05

    def __post_init__(self):
        if self.gradient_threshold <= 0:
            raise ConfigurationError("gradient_threshold must be > 0")
        if self.point_radius < 0.5:
            raise ConfigurationError("point_radius must be >= 0.5")


@dataclass
class PipelineConfig:
    ladder: GenerationLadderConfig = field(default_factory=GenerationLadderConfig)
    depth: DepthFusionConfig = field(default_factory=DepthFusionConfig)
    pointcloud: PointCloudConfig = field(default_factory=PointCloudConfig)
    rig: RigConfig = field(default_factory=RigConfig)
    schedule: OptimizationSchedule = field(default_factory=OptimizationSchedule)
    adapters: dict[str, AdapterEndpoint] = field(
        default_factory=lambda: {kind: AdapterEndpoint(kind) for kind in KINDS}
    )
    seed: int = 0
    output_dir: str = "out"


def desk_scale(cfg: PipelineConfig) -> PipelineConfig:
    """Shrink a configuration to the desk-scale preset: small rasters, short
    schedule, same structure."""
    return dataclasses.replace(
        cfg,
        ladder=GenerationLadderConfig(
            base_dims=PanoDims(256, 128),
            stylized_dims=PanoDims(384, 192),
            detailed_dims=PanoDims(512, 256),
            blend_width=min(cfg.ladder.blend_width, 32),
        ),
        depth=dataclasses.replace(
            cfg.depth, working_dims=PanoDims(512, 256), face_res=64
        ),
        pointcloud=dataclasses.replace(
            cfg.pointcloud,
            source_dims=PanoDims(256, 128),
            sparse_dims=PanoDims(128, 64),
        ),
        rig=dataclasses.replace(cfg.rig, image_size=128),
        schedule=dataclasses.replace(
            cfg.schedule, pre_pcd_iters=400, pre_pano_iters=400, transfer_iters=1000
        ),
    )


# ---------------------------------------------------------------------------
# serialization


def _dims_to_list(d: PanoDims) -> list[int]:
    return [d.width, d.height]


def _dims_from(v) -> PanoDims:
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ConfigurationError(f"dims must be [width, height], got {v!r}")
    return PanoDims(int(v[0]), int(v[1]))


def _section_to_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = _dims_to_list(v) if isinstance(v, PanoDims) else v
    return out


def _section_from_dict(cls, data: dict, name: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown keys in '{name}': {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        default = known[key].default_factory() if known[key].default_factory is not dataclasses.MISSING else known[key].default
        kwargs[key] = _dims_from(value) if isinstance(default, PanoDims) else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid '{name}' section: {exc}") from exc


_SECTIONS = {
    "ladder": GenerationLadderConfig,
    "depth": DepthFusionConfig,
    "pointcloud": PointCloudConfig,
    "rig": RigConfig,
    "schedule": OptimizationSchedule,
}


def config_to_dict(cfg: PipelineConfig) -> dict:
    doc = {name: _section_to_dict(getattr(cfg, name)) for name in _SECTIONS}
    doc["adapters"] = {
        kind: {k: v for k, v in _section_to_dict(ep).items() if v is not None}
        for kind, ep in cfg.adapters.items()
    }
    doc["seed"] = cfg.seed
    doc["output_dir"] = cfg.output_dir
    return doc


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a JSON object")
    unknown = set(data) - set(_SECTIONS) - {"adapters", "seed", "output_dir"}
    if unknown:
        raise ConfigurationError(f"unknown top-level config keys: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _section_from_dict(cls, data[name], name)
    if "adapters" in data:
        adapters = {}
        for kind, ep in data["adapters"].items():
            if kind not in KINDS:
                raise ConfigurationError(f"unknown adapter kind '{kind}'")
            adapters[kind] = _section_from_dict(AdapterEndpoint, {"kind": kind, **ep}, f"adapters.{kind}")
        for kind in KINDS:
            adapters.setdefault(kind, AdapterEndpoint(kind))
        kwargs["adapters"] = adapters
    if "seed" in data:
        kwargs["seed"] = int(data["seed"])
    if "output_dir" in data:
        kwargs["output_dir"] = str(data["output_dir"])
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")
