"""panosplat: equirectangular panorama to an enclosed 3D Gaussian scene.

Pipeline: staged panorama generation (via pluggable model adapters), tangent-face
depth fusion with metric calibration, reverse ERP point clouds, and a two-stage
3D Gaussian Splatting optimization producing a renderable field.
"""

from .errors import (
    AdapterError,
    CalibrationError,
    ConfigurationError,
    ContractError,
    DomainError,
    PanosplatError,
    PipelineError,
)
from .geometry import Intrinsics, PanoDims, Panorama, Pose, TangentFace
from .pointcloud import PointCloud, ViewImage
from .rig import CameraRig, RigConfig, SupervisionItem, SupervisionSet

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "CalibrationError",
    "CameraRig",
    "ConfigurationError",
    "ContractError",
    "DomainError",
    "Intrinsics",
    "PanoDims",
    "Panorama",
    "PanosplatError",
    "PipelineError",
    "PointCloud",
    "Pose",
    "RigConfig",
    "SupervisionItem",
    "SupervisionSet",
    "TangentFace",
    "ViewImage",
    "__version__",
]
