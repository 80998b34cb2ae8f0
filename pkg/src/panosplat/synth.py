"""Analytic test scenes: ray-castable rooms with exact depth everywhere.

Used as the ground-truth oracle for depth fusion, point clouds, and the
desk-scale reconstruction runs.  Every query is a pure function of the scene
parameters, so expected values in tests are reproducible bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Intrinsics, PanoDims, Panorama, Pose, camera_rays, pixel_to_direction


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    color: tuple[float, float, float]


@dataclass(frozen=True)
class SyntheticScene:
    kind: str = "room"
    seed: int = 0
    half_extents: tuple[float, float, float] = (2.5, 1.8, 3.0)
    texture_freq: float = 2.0
    occluders: tuple[Sphere, ...] = ()

    @staticmethod
    def room(seed: int = 0, n_occluders: int = 0, **kw) -> "SyntheticScene":
        rng = np.random.default_rng(seed)
        occs = []
        he = kw.get("half_extents", (2.5, 1.8, 3.0))
        for _ in range(n_occluders):
            # keep occluders off the origin so the panorama camera stays outside
            center = rng.uniform([-0.6, -0.5, 0.8], [0.6, 0.5, 0.55 * he[2]])
            radius = rng.uniform(0.25, 0.45)
            color = rng.uniform(0.2, 0.9, 3)
            occs.append(Sphere(tuple(center), float(radius), tuple(color)))
        return SyntheticScene(kind="room", seed=seed, occluders=tuple(occs), **kw)

    # -- ray casting --------------------------------------------------------

    def _box_depth(self, dirs: np.ndarray) -> np.ndarray:
        he = np.asarray(self.half_extents)
        with np.errstate(divide="ignore"):
            t_axis = he / np.maximum(np.abs(dirs), 1e-300)
        return t_axis.min(axis=-1)

    def trace(self, dirs: np.ndarray, origin: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Cast unit rays from `origin` (default scene center); returns
        (euclidean depth, rgb) with shapes dirs.shape[:-1] and [...,3]."""
        dirs = np.asarray(dirs, float)
        if origin is None:
            origin = np.zeros(3)
        origin = np.asarray(origin, float)
        if np.linalg.norm(origin) > 1e-12:
            depth = self._box_depth_from(origin, dirs)
        else:
            depth = self._box_depth(dirs)
        hit_sphere = np.full(dirs.shape[:-1], -1, dtype=np.int64)
        for si, sph in enumerate(self.occluders):
            c = np.asarray(sph.center) - origin
            b = dirs @ c
            disc = b * b - (c @ c - sph.radius**2)
            ok = disc > 0
            t = b - np.sqrt(np.where(ok, disc, 0.0))
            ok &= t > 1e-9
            closer = ok & (t < depth)
            depth = np.where(closer, t, depth)
            hit_sphere = np.where(closer, si, hit_sphere)
        points = origin + depth[..., None] * dirs
        rgb = self._wall_color(points)
        for si, sph in enumerate(self.occluders):
            sel = hit_sphere == si
            if sel.any():
                rgb[sel] = self._sphere_color(points[sel], sph)
        return depth, rgb

    def _box_depth_from(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        he = np.asarray(self.half_extents)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-he - origin) / dirs
            t2 = (he - origin) / dirs
        t_exit = np.where(dirs > 0, t2, np.where(dirs < 0, t1, np.inf))
        return t_exit.min(axis=-1)

    def _wall_color(self, p: np.ndarray) -> np.ndarray:
        f = self.texture_freq
        ph = self.seed * 0.7
        r = 0.5 + 0.22 * np.sin(f * p[..., 0] + ph) + 0.12 * np.sin(2.3 * f * p[..., 2])
        g = 0.5 + 0.22 * np.sin(f * p[..., 1] + 1.1 + ph) + 0.12 * np.sin(1.7 * f * p[..., 0])
        b = 0.5 + 0.22 * np.sin(f * p[..., 2] + 2.2 + ph) + 0.12 * np.sin(2.9 * f * p[..., 1])
        return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)

    def _sphere_color(self, p: np.ndarray, sph: Sphere) -> np.ndarray:
        base = np.asarray(sph.color)
        mod = 0.15 * np.sin(7.0 * p[..., 0:1] + 5.0 * p[..., 1:2])
        return np.clip(base + mod, 0.0, 1.0)

    # -- convenience views --------------------------------------------------

    def depth_at_pixels(self, u: np.ndarray, v: np.ndarray, dims: PanoDims) -> np.ndarray:
        d, _ = self.trace(pixel_to_direction(u, v, dims))
        return d

    def render_view(self, intr: Intrinsics, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
        dirs = camera_rays(intr, pose)
        return self.trace(dirs, origin=pose.position)


def scene_to_dict(scene: SyntheticScene) -> dict:
    return {
        "kind": scene.kind,
        "seed": scene.seed,
        "half_extents": list(scene.half_extents),
        "texture_freq": scene.texture_freq,
        "occluders": [
            {"center": list(s.center), "radius": s.radius, "color": list(s.color)}
            for s in scene.occluders
        ],
    }


def scene_from_dict(data: dict) -> SyntheticScene:
    return SyntheticScene(
        kind=data["kind"],
        seed=int(data["seed"]),
        half_extents=tuple(data["half_extents"]),
        texture_freq=float(data["texture_freq"]),
        occluders=tuple(
            Sphere(tuple(s["center"]), float(s["radius"]), tuple(s["color"]))
            for s in data["occluders"]
        ),
    )


def synth_scene_panorama(scene: SyntheticScene, dims: PanoDims) -> Panorama:
    """Ray-cast the scene from the origin into an ERP raster with exact depth."""
    h, w = dims.shape
    uu, vv = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    dirs = pixel_to_direction(uu, vv, dims)
    depth, rgb = scene.trace(dirs)
    return Panorama(dims=dims, rgb=rgb, depth=depth)
