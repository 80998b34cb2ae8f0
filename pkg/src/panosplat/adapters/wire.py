"""Base64 PNG / PFM codecs for the model adapter wire protocol.

Protocol summary (shared with the optional model shim):
  POST /v1/disparity, /v1/metric_depth   {"image": b64 PNG} -> {"map": b64 PFM}
  POST /v1/inpaint   {"image": b64 PNG, "mask": b64 PNG 8-bit 255=missing}
                                         -> {"image": b64 PNG}
  POST /v1/generate  {"stage", "prompt", "image"?, "width", "height"}
                                         -> {"image": b64 PNG}
  GET  /v1/health -> {"ok": true}
Errors: HTTP status >= 400 with {"error": "<message>"}.
PFM: header "Pf", width height, scale -1.0, row-major bottom-up float32 LE.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image

from ..errors import ContractError


def image_to_b64png(rgb: np.ndarray) -> str:
    arr = (np.clip(np.asarray(rgb, np.float64), 0, 1) * 255.0 + 0.5).astype(np.uint8)
    mode = "L" if arr.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def b64png_to_image(data: str) -> np.ndarray:
    arr = np.asarray(Image.open(io.BytesIO(base64.b64decode(data))))
    return arr.astype(np.float64) / 255.0


def mask_to_b64png(mask: np.ndarray) -> str:
    arr = np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def b64png_to_mask(data: str) -> np.ndarray:
    arr = np.asarray(Image.open(io.BytesIO(base64.b64decode(data))))
    return arr >= 128


def pfm_bytes(values: np.ndarray) -> bytes:
    v = np.asarray(values, np.float32)
    if v.ndim != 2:
        raise ContractError("PFM encodes single-channel maps only")
    h, w = v.shape
    return b"Pf\n" + f"{w} {h}\n".encode() + b"-1.0\n" + np.flipud(v).astype("<f4").tobytes()


def pfm_from_bytes(data: bytes) -> np.ndarray:
    buf = io.BytesIO(data)
    if buf.readline().strip() != b"Pf":
        raise ContractError("not a single-channel PFM payload")
    w, h = map(int, buf.readline().split())
    scale = float(buf.readline())
    raw = np.frombuffer(buf.read(w * h * 4), dtype="<f4" if scale < 0 else ">f4")
    return np.flipud(raw.reshape(h, w)).astype(np.float64)


def map_to_b64pfm(values: np.ndarray) -> str:
    return base64.b64encode(pfm_bytes(values)).decode("ascii")


def b64pfm_to_map(data: str) -> np.ndarray:
    return pfm_from_bytes(base64.b64decode(data))
