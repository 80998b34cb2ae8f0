"""HTTP transport for the adapter wire protocol."""

from __future__ import annotations

import time

import numpy as np
import requests

from ..errors import AdapterError
from . import wire
from .stubs import CameraView


class HttpModelClient:
    """Client for a model shim speaking the /v1/* wire protocol."""

    def __init__(self, base_url: str, timeout: float = 60.0, retries: int = 2):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries

    def _post(self, path: str, payload: dict) -> dict:
        last = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(self.base_url + path, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(0.2 * (attempt + 1))
                continue
            if resp.status_code >= 400:
                try:
                    msg = resp.json().get("error", resp.text)
                except ValueError:
                    msg = resp.text
                raise AdapterError(f"{path} failed with status {resp.status_code}: {msg}")
            return resp.json()
        raise AdapterError(f"{path} transport failed after {self.retries + 1} attempts: {last}")

    def health(self) -> bool:
        try:
            resp = requests.get(self.base_url + "/v1/health", timeout=self.timeout)
            return resp.status_code == 200 and resp.json().get("ok") is True
        except requests.RequestException:
            return False

    def disparity(self, image: np.ndarray, camera: CameraView | None = None) -> np.ndarray:
        out = self._post("/v1/disparity", {"image": wire.image_to_b64png(image)})
        return wire.b64pfm_to_map(out["map"])

    def depth_map(self, image: np.ndarray, camera: CameraView | None = None) -> np.ndarray:
        out = self._post("/v1/metric_depth", {"image": wire.image_to_b64png(image)})
        return wire.b64pfm_to_map(out["map"])

    def fill(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        out = self._post(
            "/v1/inpaint",
            {"image": wire.image_to_b64png(image), "mask": wire.mask_to_b64png(mask)},
        )
        return wire.b64png_to_image(out["image"])

    def stage(self, stage: str, prompt: str = "", image: np.ndarray | None = None,
              width: int = 0, height: int = 0) -> np.ndarray:
        payload = {"stage": stage, "prompt": prompt, "width": width, "height": height}
        if image is not None:
            payload["image"] = wire.image_to_b64png(image)
        out = self._post("/v1/generate", payload)
        return wire.b64png_to_image(out["image"])

    def transported_reference(self, image: np.ndarray) -> np.ndarray:
        """The image as the wire delivers it (8-bit quantized); identity checks
        for this transport compare against this representation."""
        return wire.b64png_to_image(wire.image_to_b64png(image))
