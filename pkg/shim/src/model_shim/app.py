"""FastAPI application implementing the wire protocol.

Endpoints (shared contract with the pipeline's HTTP adapter client):
  POST /v1/disparity, /v1/metric_depth  {"image": b64 PNG} -> {"map": b64 PFM}
  POST /v1/inpaint  {"image": b64 PNG, "mask": b64 PNG, 255=missing}
                                        -> {"image": b64 PNG}
  POST /v1/generate {"stage","prompt","image"?,"width","height"} -> {"image": ...}
  GET  /v1/health -> {"ok": true}
Errors: status >= 400 with {"error": "<message>"}.

The inpaint route composites the original pixels back outside the mask, so
the unmasked-pixel identity holds no matter what the wrapped model returns.
Response maps always match the request dims; nothing is resampled silently.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import codec, models


@dataclass
class ShimConfig:
    port: int = 8080
    host: str = "127.0.0.1"
    disparity_model: str = "luminance"
    metric_depth_model: str = "luminance"
    inpaint_model: str = "diffuse"
    generate_model: str = "procedural"
    device: str = "cpu"
    max_image_side: int = 4096

    def __post_init__(self):
        for name, registry in (
            (self.disparity_model, models.DISPARITY_MODELS),
            (self.metric_depth_model, models.METRIC_DEPTH_MODELS),
            (self.inpaint_model, models.INPAINT_MODELS),
            (self.generate_model, models.GENERATE_MODELS),
        ):
            if name not in registry:
                raise ValueError(f"unknown model '{name}' (have {sorted(registry)})")
        if self.max_image_side < 1:
            raise ValueError("max_image_side must be positive")


class RequestError(Exception):
    def __init__(self, message: str, status: int = 400):
        super().__init__(message)
        self.status = status


def _require(payload: dict, key: str) -> object:
    if key not in payload:
        raise RequestError(f"missing required field '{key}'")
    return payload[key]


def create_app(cfg: ShimConfig = ShimConfig()) -> FastAPI:
    app = FastAPI(title="model-shim")
    # procedural models are reentrant; wrapped weights usually are not
    lock = threading.Lock()

    def decode_image(payload: dict, key: str = "image") -> np.ndarray:
        try:
            img = codec.decode_png(str(_require(payload, key)))
        except codec.CodecError as exc:
            raise RequestError(str(exc))
        if max(img.shape[:2]) > cfg.max_image_side:
            raise RequestError(
                f"image side {max(img.shape[:2])} exceeds limit {cfg.max_image_side}",
                status=413,
            )
        return img

    @app.exception_handler(RequestError)
    async def _request_error(request: Request, exc: RequestError):
        return JSONResponse(status_code=exc.status, content={"error": str(exc)})

    @app.get("/v1/health")
    async def health():
        return {"ok": True}

    @app.post("/v1/disparity")
    async def disparity(request: Request):
        payload = await _json(request)
        img = decode_image(payload)
        with lock:
            out = models.DISPARITY_MODELS[cfg.disparity_model](img)
        return {"map": codec.encode_pfm(out)}

    @app.post("/v1/metric_depth")
    async def metric_depth(request: Request):
        payload = await _json(request)
        img = decode_image(payload)
        with lock:
            out = models.METRIC_DEPTH_MODELS[cfg.metric_depth_model](img)
        return {"map": codec.encode_pfm(out)}

    @app.post("/v1/inpaint")
    async def inpaint(request: Request):
        payload = await _json(request)
        img = decode_image(payload)
        mask_img = decode_image(payload, "mask")
        if mask_img.ndim == 3:
            mask_img = mask_img[:, :, 0]
        if mask_img.shape != img.shape[:2]:
            raise RequestError(
                f"mask dims {mask_img.shape} do not match image dims {img.shape[:2]}"
            )
        mask = mask_img >= 128
        if mask.any():
            with lock:
                filled = models.INPAINT_MODELS[cfg.inpaint_model](img, mask)
            if filled.shape != img.shape:
                raise RequestError("inpaint model returned mismatched dims", status=500)
            # identity contract: original pixels outside the mask, always
            out = np.where(mask[:, :, None] if img.ndim == 3 else mask, filled, img)
        else:
            out = img
        return {"image": codec.encode_png(out)}

    @app.post("/v1/generate")
    async def generate(request: Request):
        payload = await _json(request)
        stage = str(_require(payload, "stage"))
        prompt = str(payload.get("prompt", ""))
        width = int(payload.get("width", 0))
        height = int(payload.get("height", 0))
        if max(width, height) > cfg.max_image_side:
            raise RequestError(
                f"requested size {width}x{height} exceeds limit {cfg.max_image_side}",
                status=413,
            )
        image = decode_image(payload) if "image" in payload else None
        try:
            with lock:
                out = models.GENERATE_MODELS[cfg.generate_model](
                    stage, prompt, image, width, height
                )
        except models.ModelError as exc:
            raise RequestError(str(exc))
        return {"image": codec.encode_png(out)}

    return app


async def _json(request: Request) -> dict:
    try:
        payload = await request.json()
    except Exception:
        raise RequestError("request body must be a JSON object")
    if not isinstance(payload, dict):
        raise RequestError("request body must be a JSON object")
    return payload


def serve(cfg: ShimConfig = ShimConfig()) -> None:
    """Run the service; verifies the app answers /v1/health before binding."""
    import uvicorn
    from fastapi.testclient import TestClient

    app = create_app(cfg)
    with TestClient(app) as client:
        if client.get("/v1/health").json() != {"ok": True}:
            raise RuntimeError("health check failed; refusing to serve")
    uvicorn.run(app, host=cfg.host, port=cfg.port)
