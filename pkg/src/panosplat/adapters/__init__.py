"""Adapter contracts for external models, with stub / http / directory transports.

Client duck-types:
  depth client:        disparity(image, camera=None) -> HxW relative disparity
  metric depth client: depth_map(image, camera=None) -> HxW meters
  inpaint client:      fill(image, mask) -> image (unmasked pixels unchanged)
  generator client:    stage(name, prompt=..., image=..., width=..., height=...)

`checked_fill` enforces the inpaint unmasked-pixel identity on every transport.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import AdapterError, ConfigurationError, ContractError
from .stubs import (
    AnalyticDepthStub,
    AnalyticMetricStub,
    CameraView,
    ConstantDepthStub,
    DiffusionFreeInpaintStub,
    IdentityInpaintStub,
    ProceduralGeneratorStub,
    push_pull_fill,
)

KINDS = ("generator", "depth", "metric_depth", "inpaint")
TRANSPORTS = ("stub", "http", "directory")


@dataclass(frozen=True)
class AdapterEndpoint:
    kind: str
    transport: str = "stub"
    uri: str | None = None
    path: str | None = None
    timeout: float = 60.0
    retries: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown adapter kind '{self.kind}'")
        if self.transport not in TRANSPORTS:
            raise ConfigurationError(f"unknown transport '{self.transport}'")
        if self.transport == "http" and not self.uri:
            raise ConfigurationError("http transport requires a uri")
        if self.transport == "directory":
            if not self.path or not Path(self.path).is_dir():
                raise ConfigurationError("directory transport requires an existing path")


def build_client(endpoint: AdapterEndpoint, stub_factory=None):
    """Instantiate the client behind an endpoint. For stub transports,
    `stub_factory(kind)` supplies the stub (defaults to simple procedural ones)."""
    if endpoint.transport == "stub":
        if stub_factory is not None:
            return stub_factory(endpoint.kind)
        return default_stub(endpoint.kind)
    if endpoint.transport == "http":
        from .http import HttpModelClient

        return HttpModelClient(endpoint.uri, timeout=endpoint.timeout, retries=endpoint.retries)
    from .directory import DirectoryModelClient

    return DirectoryModelClient(endpoint.path)


def default_stub(kind: str):
    if kind == "generator":
        return ProceduralGeneratorStub()
    if kind == "inpaint":
        return DiffusionFreeInpaintStub()
    if kind in ("depth", "metric_depth"):
        return ConstantDepthStub(2.0)
    raise ConfigurationError(f"unknown adapter kind '{kind}'")


def checked_fill(client, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Call an inpaint client and enforce the unmasked-pixel identity contract."""
    image = np.asarray(image, np.float64)
    mask = np.asarray(mask, bool)
    if mask.shape != image.shape[:2]:
        raise ContractError("mask dims must match image dims")
    out = np.asarray(client.fill(image, mask), np.float64)
    if out.shape != image.shape:
        raise ContractError(f"inpaint returned shape {out.shape}, expected {image.shape}")
    ref = image
    if hasattr(client, "transported_reference"):
        ref = client.transported_reference(image)
    if not np.array_equal(out[~mask], ref[~mask]):
        raise ContractError("inpaint adapter modified pixels outside the mask")
    if not np.isfinite(out[mask]).all() or (mask.any() and (out[mask].min() < 0 or out[mask].max() > 1)):
        raise ContractError("inpaint fill values must be finite and within [0,1]")
    return out


__all__ = [
    "AdapterEndpoint",
    "AnalyticDepthStub",
    "AnalyticMetricStub",
    "CameraView",
    "ConstantDepthStub",
    "DiffusionFreeInpaintStub",
    "IdentityInpaintStub",
    "ProceduralGeneratorStub",
    "build_client",
    "checked_fill",
    "default_stub",
    "push_pull_fill",
]
