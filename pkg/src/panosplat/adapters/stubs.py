"""Deterministic procedural stubs for every adapter kind.

All stubs are pure functions of (inputs, seed): repeated calls are
byte-identical, so the whole pipeline runs and regresses without any
neural model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AdapterError, ContractError
from ..geometry import Intrinsics, Pose, camera_rays
from ..synth import SyntheticScene


@dataclass(frozen=True)
class CameraView:
    """Optional per-call camera metadata; analytic stubs need it to ray-cast,
    network transports ignore it."""

    intrinsics: Intrinsics
    pose: Pose
    tag: int | None = None  # e.g. tangent face index


# -- depth ------------------------------------------------------------------


class ConstantDepthStub:
    def __init__(self, depth: float):
        self.depth = float(depth)

    def disparity(self, image: np.ndarray, camera: CameraView | None = None) -> np.ndarray:
        return np.full(image.shape[:2], 1.0 / self.depth)

    def depth_map(self, image: np.ndarray, camera: CameraView | None = None) -> np.ndarray:
        return np.full(image.shape[:2], self.depth)


def face_affine_corruption(seed: int, tag: int) -> tuple[float, float]:
    """Deterministic per-face affine (scale in [0.5,2], offset in [-0.2,0.2])."""
    rng = np.random.default_rng([seed, tag])
    return float(rng.uniform(0.5, 2.0)), float(rng.uniform(-0.2, 0.2))


class AnalyticDepthStub:
    """Relative disparity oracle: 1/analytic depth, affinely corrupted per face
    so global alignment has real work to do."""

    def __init__(self, scene: SyntheticScene, corrupt_seed: int | None = None):
        self.scene = scene
        self.corrupt_seed = corrupt_seed

    def disparity(self, image: np.ndarray, camera: CameraView | None = None) -> np.ndarray:
        if camera is None:
            raise AdapterError("analytic depth stub needs camera metadata")
        dirs = camera_rays(camera.intrinsics, camera.pose)
        depth, _ = self.scene.trace(dirs, origin=camera.pose.position)
        disp = 1.0 / depth
        if self.corrupt_seed is not None and camera.tag is not None:
            s, o = face_affine_corruption(self.corrupt_seed, camera.tag)
            disp = s * disp + o
        return disp


class AnalyticMetricStub:
    """Metric depth oracle, optionally with seeded multiplicative noise."""

    def __init__(self, scene: SyntheticScene, noise: float = 0.0, seed: int = 0):
        self.scene = scene
        self.noise = float(noise)
        self.seed = int(seed)

    def depth_map(self, image: np.ndarray, camera: CameraView | None = None) -> np.ndarray:
        if camera is None:
            raise AdapterError("analytic metric stub needs camera metadata")
        dirs = camera_rays(camera.intrinsics, camera.pose)
        depth, _ = self.scene.trace(dirs, origin=camera.pose.position)
        if self.noise > 0.0:
            rng = np.random.default_rng([self.seed, camera.tag or 0])
            depth = depth * (1.0 + self.noise * rng.standard_normal(depth.shape))
        return depth


# -- inpainting -------------------------------------------------------------


def push_pull_fill(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Multigrid push-pull hole filling: pull known pixels down an image
    pyramid, push weighted averages back into the holes.  Filled values are
    convex combinations of known pixels."""
    img = np.asarray(image, np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    w = (~np.asarray(mask, bool)).astype(np.float64)
    levels = [(img * w[:, :, None], w)]
    while levels[-1][1].shape[0] > 1 and levels[-1][1].shape[1] > 1 and (levels[-1][1] == 0).any():
        v, wt = levels[-1]
        h2, w2 = (v.shape[0] + 1) // 2, (v.shape[1] + 1) // 2
        vd = np.zeros((h2, w2, v.shape[2]))
        wd = np.zeros((h2, w2))
        for dy in (0, 1):
            for dx in (0, 1):
                sub_v = v[dy::2, dx::2]
                sub_w = wt[dy::2, dx::2]
                vd[: sub_v.shape[0], : sub_v.shape[1]] += sub_v
                wd[: sub_w.shape[0], : sub_w.shape[1]] += sub_w
        levels.append((vd, wd))
    # resolve averages coarsest-first, then push down into empty pixels
    v, wt = levels[-1]
    fill = v / np.maximum(wt, 1e-12)[:, :, None]
    if (wt == 0).all():
        fill[:] = 0.0
    for v, wt in reversed(levels[:-1]):
        up = fill.repeat(2, axis=0).repeat(2, axis=1)[: wt.shape[0], : wt.shape[1]]
        known = wt > 0
        fill = np.where(known[:, :, None], v / np.maximum(wt, 1e-12)[:, :, None], up)
    out = np.where(np.asarray(mask, bool)[:, :, None], fill, img)
    return out[:, :, 0] if squeeze else out


class DiffusionFreeInpaintStub:
    def fill(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        if np.asarray(mask).shape != np.asarray(image).shape[:2]:
            raise ContractError("mask dims must match image dims")
        return push_pull_fill(image, mask)


class IdentityInpaintStub:
    """Leaves masked pixels at their rendered values (degenerate no-op fill)."""

    def fill(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        if np.asarray(mask).shape != np.asarray(image).shape[:2]:
            raise ContractError("mask dims must match image dims")
        return np.asarray(image, np.float64).copy()


# -- generation -------------------------------------------------------------


def _prompt_phase(prompt: str) -> float:
    return (hash_text(prompt) % 1000) / 1000.0 * 2.0 * np.pi


def hash_text(text: str) -> int:
    h = 2166136261
    for ch in text.encode():
        h = ((h ^ ch) * 16777619) & 0xFFFFFFFF
    return h


class ProceduralGeneratorStub:
    """Wrap-continuous sinusoid panoramas standing in for the diffusion ladder."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)

    def stage(self, stage: str, prompt: str = "", image: np.ndarray | None = None,
              width: int = 0, height: int = 0) -> np.ndarray:
        if stage == "base":
            return self._base(prompt, width, height)
        if image is None:
            raise ContractError(f"stage '{stage}' requires an input image")
        if stage == "stylize":
            out = _resize_bilinear(image, width, height)
            return np.clip(0.85 * out + 0.15 * np.sin(3.0 * out + self.seed), 0.0, 1.0)
        if stage == "superres":
            return _resize_bicubic(image, width, height)
        if stage == "tile":
            if image.shape[:2] != (height, width):
                raise ContractError("tile stage expects input already at target dims")
            yy, xx = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
            detail = 0.03 * np.sin(2 * np.pi * 16 * xx / width) * np.sin(2 * np.pi * 16 * yy / height)
            return np.clip(image + detail[:, :, None], 0.0, 1.0)
        raise ContractError(f"unknown generator stage '{stage}'")

    def _base(self, prompt: str, width: int, height: int) -> np.ndarray:
        from ..geometry import PanoDims, pixel_to_direction

        dims = PanoDims(width, height)
        uu, vv = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
        d = pixel_to_direction(uu, vv, dims)
        ph = _prompt_phase(prompt) + 0.3 * self.seed
        r = 0.5 + 0.3 * np.sin(3.0 * d[..., 0] + ph) * np.cos(2.0 * d[..., 1])
        g = 0.5 + 0.3 * np.sin(2.0 * d[..., 1] + 1.3 + ph) * np.cos(3.0 * d[..., 2])
        b = 0.5 + 0.3 * np.sin(4.0 * d[..., 2] + 2.1 + ph)
        return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def _resize_bilinear(img: np.ndarray, width: int, height: int) -> np.ndarray:
    from PIL import Image as PILImage

    arr = np.clip(img, 0, 1)
    chans = [
        np.asarray(
            PILImage.fromarray(arr[:, :, c].astype(np.float32), mode="F").resize(
                (width, height), PILImage.BILINEAR
            )
        )
        for c in range(arr.shape[2])
    ]
    return np.stack(chans, axis=-1).astype(np.float64)


def _resize_bicubic(img: np.ndarray, width: int, height: int) -> np.ndarray:
    from PIL import Image as PILImage

    arr = np.clip(img, 0, 1)
    chans = [
        np.asarray(
            PILImage.fromarray(arr[:, :, c].astype(np.float32), mode="F").resize(
                (width, height), PILImage.BICUBIC
            )
        )
        for c in range(arr.shape[2])
    ]
    return np.clip(np.stack(chans, axis=-1).astype(np.float64), 0.0, 1.0)
