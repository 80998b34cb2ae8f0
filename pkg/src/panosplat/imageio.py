"""File formats: 8-bit PNG for RGB, PFM for float maps, binary PLY for points."""

from __future__ import annotations


import numpy as np
from PIL import Image

from .errors import ContractError

# -- PNG --------------------------------------------------------------------


def write_png(path, rgb: np.ndarray) -> None:
    arr = np.clip(np.asarray(rgb, np.float64), 0.0, 1.0)
    data = (arr * 255.0 + 0.5).astype(np.uint8)
    if data.ndim == 2:
        Image.fromarray(data, mode="L").save(path)
    else:
        Image.fromarray(data, mode="RGB").save(path)


def read_png(path) -> np.ndarray:
    img = np.asarray(Image.open(path))
    return img.astype(np.float64) / 255.0


# -- PFM: "Pf" header, width height, scale -1.0, row-major bottom-up float32 --


def write_pfm(path, values: np.ndarray) -> None:
    v = np.asarray(values, np.float32)
    if v.ndim != 2:
        raise ContractError("PFM writer expects a single-channel map")
    h, w = v.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(v).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise ContractError("not a single-channel PFM file")
        w, h = map(int, f.readline().split())
        scale = float(f.readline())
        data = np.frombuffer(f.read(w * h * 4), dtype="<f4" if scale < 0 else ">f4")
    return np.flipud(data.reshape(h, w)).astype(np.float64)


# -- point cloud PLY: x,y,z float32 + red,green,blue uint8, binary LE --------

_PLY_POINT_HEADER = (
    "ply\nformat binary_little_endian 1.0\n"
    "element vertex {n}\n"
    "property float x\nproperty float y\nproperty float z\n"
    "property uchar red\nproperty uchar green\nproperty uchar blue\n"
    "end_header\n"
)


def write_point_ply(path, positions: np.ndarray, colors: np.ndarray) -> None:
    n = len(positions)
    rec = np.empty(
        n,
        dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("r", "u1"), ("g", "u1"), ("b", "u1")],
    )
    rec["x"], rec["y"], rec["z"] = positions.T.astype(np.float32)
    rgb8 = (np.clip(colors, 0, 1) * 255.0 + 0.5).astype(np.uint8)
    rec["r"], rec["g"], rec["b"] = rgb8.T
    with open(path, "wb") as f:
        f.write(_PLY_POINT_HEADER.format(n=n).encode())
        f.write(rec.tobytes())


def _parse_ply_header(f):
    if f.readline().strip() != b"ply":
        raise ContractError("not a PLY file")
    n = None
    props = []
    while True:
        line = f.readline()
        if not line:
            raise ContractError("truncated PLY header")
        tok = line.split()
        if tok[0] == b"format" and tok[1] != b"binary_little_endian":
            raise ContractError("only binary little-endian PLY supported")
        if tok[0] == b"element":
            if tok[1] != b"vertex":
                raise ContractError("only vertex elements supported")
            n = int(tok[2])
        elif tok[0] == b"property":
            props.append((tok[2].decode(), tok[1].decode()))
        elif tok[0] == b"end_header":
            return n, props


_PLY_TYPES = {"float": "<f4", "uchar": "u1", "double": "<f8", "int": "<i4"}


def read_ply_records(path) -> np.ndarray:
    """Read a binary PLY vertex element into a structured array keyed by property name."""
    with open(path, "rb") as f:
        n, props = _parse_ply_header(f)
        dtype = [(name, _PLY_TYPES[t]) for name, t in props]
        return np.frombuffer(f.read(), dtype=dtype, count=n)


def read_point_ply(path) -> tuple[np.ndarray, np.ndarray]:
    rec = read_ply_records(path)
    pos = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    col = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1).astype(np.float64) / 255.0
    return pos, col


def write_ply_fields(path, fields: dict[str, np.ndarray]) -> None:
    """Write named float32 per-vertex properties (used for Gaussian fields)."""
    names = list(fields)
    n = len(next(iter(fields.values())))
    rec = np.empty(n, dtype=[(name, "<f4") for name in names])
    for name in names:
        rec[name] = np.asarray(fields[name], np.float32)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode())
        f.write(rec.tobytes())
