"""Wire payload codecs: base64 PNG images and base64 PFM float maps.

PFM layout: header "Pf", then "width height", then scale -1.0 (negative marks
little-endian), then row-major bottom-up float32.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image


class CodecError(ValueError):
    pass


def decode_png(data: str) -> np.ndarray:
    """Base64 PNG -> uint8 array (H,W) or (H,W,3)."""
    try:
        raw = base64.b64decode(data, validate=True)
        img = Image.open(io.BytesIO(raw))
        img.load()
    except Exception as exc:
        raise CodecError(f"invalid PNG payload: {exc}") from exc
    arr = np.asarray(img)
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return arr


def encode_png(arr: np.ndarray) -> str:
    arr = np.asarray(arr, np.uint8)
    mode = "L" if arr.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def encode_pfm(values: np.ndarray) -> str:
    v = np.asarray(values, np.float32)
    if v.ndim != 2:
        raise CodecError("PFM encodes single-channel maps only")
    h, w = v.shape
    blob = b"Pf\n" + f"{w} {h}\n".encode() + b"-1.0\n" + np.flipud(v).astype("<f4").tobytes()
    return base64.b64encode(blob).decode("ascii")


def decode_pfm(data: str) -> np.ndarray:
    try:
        buf = io.BytesIO(base64.b64decode(data, validate=True))
    except Exception as exc:
        raise CodecError(f"invalid base64 payload: {exc}") from exc
    if buf.readline().strip() != b"Pf":
        raise CodecError("not a single-channel PFM payload")
    w, h = map(int, buf.readline().split())
    scale = float(buf.readline())
    raw = np.frombuffer(buf.read(w * h * 4), dtype="<f4" if scale < 0 else ">f4")
    if len(raw) != w * h:
        raise CodecError("truncated PFM payload")
    return np.flipud(raw.reshape(h, w)).astype(np.float64)
