"""Directory transport: precomputed responses keyed by request content hash."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..errors import AdapterError
from . import wire
from .stubs import CameraView


def request_key(kind: str, payload: dict) -> str:
    blob = json.dumps({"kind": kind, **payload}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:32]


class DirectoryModelClient:
    """Serves adapter responses captured earlier into a directory.

    Each response lives at <dir>/<sha256-prefix>.<ext> where the key hashes the
    full request payload; a miss is an adapter error (nothing is computed)."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.is_dir():
            raise AdapterError(f"directory transport path does not exist: {path}")

    def _load(self, key: str, ext: str) -> bytes:
        f = self.path / f"{key}.{ext}"
        if not f.exists():
            raise AdapterError(f"no precomputed response for request {key}")
        return f.read_bytes()

    def disparity(self, image: np.ndarray, camera: CameraView | None = None) -> np.ndarray:
        key = request_key("disparity", {"image": wire.image_to_b64png(image)})
        return wire.pfm_from_bytes(self._load(key, "pfm"))

    def depth_map(self, image: np.ndarray, camera: CameraView | None = None) -> np.ndarray:
        key = request_key("metric_depth", {"image": wire.image_to_b64png(image)})
        return wire.pfm_from_bytes(self._load(key, "pfm"))

    def fill(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        key = request_key(
            "inpaint", {"image": wire.image_to_b64png(image), "mask": wire.mask_to_b64png(mask)}
        )
        data = self._load(key, "png")
        import base64

        return wire.b64png_to_image(base64.b64encode(data).decode())

    def stage(self, stage: str, prompt: str = "", image: np.ndarray | None = None,
              width: int = 0, height: int = 0) -> np.ndarray:
        payload = {"stage": stage, "prompt": prompt, "width": width, "height": height}
        if image is not None:
            payload["image"] = wire.image_to_b64png(image)
        key = request_key("generate", payload)
        data = self._load(key, "png")
        import base64

        return wire.b64png_to_image(base64.b64encode(data).decode())


def record_disparity(path, image: np.ndarray, result: np.ndarray) -> str:
    key = request_key("disparity", {"image": wire.image_to_b64png(image)})
    (Path(path) / f"{key}.pfm").write_bytes(wire.pfm_bytes(result))
    return key


def record_inpaint(path, image: np.ndarray, mask: np.ndarray, result: np.ndarray) -> str:
    key = request_key(
        "inpaint", {"image": wire.image_to_b64png(image), "mask": wire.mask_to_b64png(mask)}
    )
    import base64 as _b64

    (Path(path) / f"{key}.png").write_bytes(_b64.b64decode(wire.image_to_b64png(result)))
    return key
