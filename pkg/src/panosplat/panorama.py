"""Seam-continuity blending and the staged panorama generation ladder."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, PipelineError
from .geometry import PanoDims, Panorama


@dataclass(frozen=True)
class GenerationLadderConfig:
    base_dims: PanoDims = field(default_factory=lambda: PanoDims(1024, 512))
    stylized_dims: PanoDims = field(default_factory=lambda: PanoDims(1536, 768))
    detailed_dims: PanoDims = field(default_factory=lambda: PanoDims(6144, 3072))
    blend_width: int = 32

    def __post_init__(self):
        if not (self.base_dims.width < self.stylized_dims.width < self.detailed_dims.width):
            raise ConfigurationError("ladder resolutions must strictly increase")
        if self.blend_width < 0 or self.blend_width > self.base_dims.width // 4:
            raise ConfigurationError("blend_width must be in [0, W/4]")


def circular_blend(values: np.ndarray, blend_width: int) -> np.ndarray:
    """Cross-fade the last `blend_width` columns into the wrapped left edge so the
    horizontal seam becomes continuous. blend_width = 0 is the identity."""
    w = values.shape[1]
    if blend_width < 0 or blend_width > w // 4:
        raise ConfigurationError(f"blend_width {blend_width} outside [0, {w // 4}]")
    if blend_width == 0:
        return values.copy()
    out = values.astype(np.float64).copy()
    # The strip interpolates from the last preserved column to the wrapped
    # column 0, reaching it exactly at column W-1.  Both anchors lie outside
    # the strip, so a second application reproduces the same result bit-exactly.
    t = (np.arange(1, blend_width + 1) / blend_width).reshape(
        (1, blend_width) + (1,) * (values.ndim - 2)
    )
    anchor_right = values[:, w - blend_width - 1 : w - blend_width]
    anchor_left = values[:, 0:1]
    out[:, w - blend_width :] = (1.0 - t) * anchor_right + t * anchor_left
    return out


def seam_discontinuity(values: np.ndarray) -> float:
    """Largest per-row/per-channel jump between the first and last column."""
    if values.shape[1] < 2:
        raise ContractError("field must have at least 2 columns")
    return float(np.max(np.abs(values[:, 0].astype(np.float64) - values[:, -1])))


def resize_panorama(pano: Panorama, dims: PanoDims) -> Panorama:
    """Bilinear resize of the RGB raster to `dims` (depth, if any, is dropped:
    resampled depth would mix values across object edges)."""
    from PIL import Image as PILImage

    arr = np.clip(pano.rgb, 0.0, 1.0)
    chans = [
        np.asarray(
            PILImage.fromarray(arr[:, :, c].astype(np.float32), mode="F").resize(
                (dims.width, dims.height), PILImage.BILINEAR
            )
        )
        for c in range(3)
    ]
    return Panorama(dims=dims, rgb=np.stack(chans, axis=-1).astype(np.float64))


STAGES = ("base", "stylize", "superres", "tile")


def run_generation_ladder(prompt: str, generator, cfg: GenerationLadderConfig) -> Panorama:
    """Drive the staged generator: base -> lineart-conditioned stylize ->
    super-resolve -> tile-refine, blending the seam after every stage.

    `generator` follows the GeneratorClient contract (adapters module).
    Returns the final panorama with a stage log in `metadata`.
    """
    stage_dims = {
        "base": cfg.base_dims,
        "stylize": cfg.stylized_dims,
        "superres": cfg.detailed_dims,
        "tile": cfg.detailed_dims,
    }
    image = None
    log = []
    for stage in STAGES:
        dims = stage_dims[stage]
        try:
            image = generator.stage(stage, prompt=prompt, image=image, width=dims.width, height=dims.height)
        except ContractError:
            raise
        except Exception as exc:
            raise PipelineError(f"generator stage '{stage}' failed: {exc}") from exc
        image = np.asarray(image, dtype=np.float64)
        if image.shape != (dims.height, dims.width, 3):
            raise ContractError(
                f"stage '{stage}' returned shape {image.shape}, expected {(dims.height, dims.width, 3)}"
            )
        bw = min(cfg.blend_width, dims.width // 4) if cfg.blend_width else 0
        image = circular_blend(image, bw)
        log.append({"stage": stage, "width": dims.width, "height": dims.height, "blend_width": bw})
    pano = Panorama(dims=cfg.detailed_dims, rgb=np.clip(image, 0.0, 1.0))
    pano.metadata = {"prompt": prompt, "stages": log}
    return pano
