"""HTTP model shim speaking the /v1/* image-in image-out wire protocol."""

from .app import ShimConfig, create_app, serve

__all__ = ["ShimConfig", "create_app", "serve"]
