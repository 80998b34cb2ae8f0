"""Command-line entry point for the model shim service."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click

from .app import ShimConfig, serve


@click.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file with ShimConfig fields.")
@click.option("--port", type=int, default=None, help="Override the configured port.")
@click.option("--host", default=None, help="Override the configured bind host.")
def main(config_path, port, host):
    """Serve depth, metric-depth, inpainting, and generation models over HTTP."""
    cfg = ShimConfig()
    if config_path:
        data = json.loads(Path(config_path).read_text())
        known = {f.name for f in dataclasses.fields(ShimConfig)}
        unknown = set(data) - known
        if unknown:
            raise click.ClickException(f"unknown config keys: {sorted(unknown)}")
        cfg = ShimConfig(**data)
    if port is not None:
        cfg = dataclasses.replace(cfg, port=port)
    if host is not None:
        cfg = dataclasses.replace(cfg, host=host)
    serve(cfg)


if __name__ == "__main__":
    main()
