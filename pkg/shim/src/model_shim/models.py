"""Built-in model implementations.

Each endpoint has a registry of named models so a deployment can register
wrappers around real pretrained weights; the defaults are deterministic
procedural models that need no downloads and make the service testable.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


class ModelError(ValueError):
    pass


def _luminance(img: np.ndarray) -> np.ndarray:
    f = img.astype(np.float64) / 255.0
    if f.ndim == 2:
        return f
    return 0.2126 * f[:, :, 0] + 0.7152 * f[:, :, 1] + 0.0722 * f[:, :, 2]


# -- disparity / metric depth -----------------------------------------------


def disparity_from_luminance(img: np.ndarray) -> np.ndarray:
    """Bright-is-near heuristic; strictly positive relative disparity."""
    return 0.2 + _luminance(img)


def depth_from_luminance(img: np.ndarray) -> np.ndarray:
    """Bright-is-near heuristic mapped onto a 1..5 meter range."""
    return 1.0 + 4.0 * (1.0 - _luminance(img))


# -- inpainting --------------------------------------------------------------


def diffuse_fill(img: np.ndarray, mask: np.ndarray, iters: int = 64) -> np.ndarray:
    """Fill masked pixels by repeated 4-neighbor averaging from known pixels.

    The caller composites the original pixels back outside the mask, so only
    the masked region of the result matters."""
    f = img.astype(np.float64)
    if f.ndim == 2:
        f = f[:, :, None]
    known = ~mask
    out = f * known[:, :, None]
    weight = known.astype(np.float64)
    for _ in range(iters):
        acc = np.zeros_like(out)
        wacc = np.zeros_like(weight)
        for shift, axis in ((1, 0), (-1, 0), (1, 1), (-1, 1)):
            acc += np.roll(out, shift, axis=axis)
            wacc += np.roll(weight, shift, axis=axis)
        filled = wacc > 0
        vals = np.where(filled[:, :, None], acc / np.maximum(wacc, 1e-12)[:, :, None], out)
        out = np.where(known[:, :, None], out, vals)
        weight = np.maximum(weight, filled.astype(np.float64) * (~known) + known)
    if img.ndim == 2:
        out = out[:, :, 0]
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


# -- generation --------------------------------------------------------------


def _prompt_hash(text: str) -> int:
    h = 2166136261
    for ch in text.encode():
        h = ((h ^ ch) * 16777619) & 0xFFFFFFFF
    return h


def generate_stage(stage: str, prompt: str, image: np.ndarray | None,
                   width: int, height: int) -> np.ndarray:
    """Wrap-continuous procedural panorama stages standing in for a diffusion
    ladder: base synthesizes, the rest transform the incoming image."""
    if stage == "base":
        if width < 2 or height < 1:
            raise ModelError("base stage needs positive width and height")
        phase = (_prompt_hash(prompt) % 1000) / 1000.0 * 2.0 * np.pi
        lon = 2.0 * np.pi * (np.arange(width) + 0.5) / width
        lat = np.pi * (np.arange(height) + 0.5) / height
        ll, tt = np.meshgrid(lon, lat)
        r = 0.5 + 0.35 * np.sin(2 * ll + phase) * np.sin(tt)
        g = 0.5 + 0.35 * np.sin(3 * ll + 1.1 + phase) * np.cos(tt)
        b = 0.5 + 0.35 * np.cos(ll + 2.3 + phase)
        out = np.stack([r, g, b], axis=-1)
        return np.clip(np.round(out * 255), 0, 255).astype(np.uint8)
    if image is None:
        raise ModelError(f"stage '{stage}' requires an input image")
    pil = Image.fromarray(image if image.ndim == 3 else np.repeat(image[:, :, None], 3, 2))
    if stage == "stylize":
        resized = np.asarray(pil.resize((width, height), Image.BILINEAR), np.float64)
        out = 0.85 * resized + 0.15 * 255.0 * np.sin(resized / 40.0) ** 2
        return np.clip(np.round(out), 0, 255).astype(np.uint8)
    if stage == "superres":
        return np.asarray(pil.resize((width, height), Image.BICUBIC), np.uint8)
    if stage == "tile":
        if pil.size != (width, height):
            raise ModelError("tile stage expects input already at target dims")
        arr = np.asarray(pil, np.float64)
        yy, xx = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
        detail = 8.0 * np.sin(2 * np.pi * 16 * xx / width) * np.sin(2 * np.pi * 16 * yy / height)
        return np.clip(np.round(arr + detail[:, :, None]), 0, 255).astype(np.uint8)
    raise ModelError(f"unknown generator stage '{stage}'")


DISPARITY_MODELS = {"luminance": disparity_from_luminance}
METRIC_DEPTH_MODELS = {"luminance": depth_from_luminance}
INPAINT_MODELS = {"diffuse": diffuse_fill}
GENERATE_MODELS = {"procedural": generate_stage}
