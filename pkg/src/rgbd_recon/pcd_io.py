"""PCD v0.7 reading and writing.

Layout written: FIELDS x y z rgb, plus normal_x normal_y normal_z when the
cloud carries normals. Every field is a 4-byte little-endian float. Color is
packed as the 32-bit word 0x00RRGGBB and reinterpreted as a float, which is
what common PCD consumers expect. Serialization is idempotent: write, read,
write again gives byte-identical files for both encodings.
"""

from __future__ import annotations

import os

import numpy as np

from .cloud import PointCloud
from .errors import IoError, ParseError, UnsupportedPcd

_HEADER_KEYS = ["VERSION", "FIELDS", "SIZE", "TYPE", "COUNT",
                "WIDTH", "HEIGHT", "VIEWPOINT", "POINTS", "DATA"]

_FIELDS_PLAIN = ["x", "y", "z"]
_FIELDS_RGB = ["x", "y", "z", "rgb"]
_FIELDS_NORMALS = ["x", "y", "z", "rgb", "normal_x", "normal_y", "normal_z"]
_KNOWN_FIELD_SETS = (_FIELDS_PLAIN, _FIELDS_RGB, _FIELDS_NORMALS,
                     ["x", "y", "z", "normal_x", "normal_y", "normal_z"])


def pack_rgb(colors: np.ndarray) -> np.ndarray:
    """[0,1] colors -> float32 array whose bit patterns are 0x00RRGGBB."""
    q = np.clip(np.round(np.asarray(colors) * 255.0), 0, 255).astype(np.uint32)
    words = (q[:, 0] << 16) | (q[:, 1] << 8) | q[:, 2]
    return words.view(np.float32)


def unpack_rgb(rgb: np.ndarray) -> np.ndarray:
    words = np.ascontiguousarray(rgb, dtype=np.float32).view(np.uint32)
    r = (words >> 16) & 0xFF
    g = (words >> 8) & 0xFF
    b = words & 0xFF
    return np.column_stack([r, g, b]).astype(np.float64) / 255.0


def _build_header(fields, n, encoding):
    lines = ["# .PCD v0.7 - Point Cloud Data file format"]
    values = {
        "VERSION": "0.7",
        "FIELDS": " ".join(fields),
        "SIZE": " ".join(["4"] * len(fields)),
        "TYPE": " ".join(["F"] * len(fields)),
        "COUNT": " ".join(["1"] * len(fields)),
        "WIDTH": str(n),
        "HEIGHT": "1",
        "VIEWPOINT": "0 0 0 1 0 0 0",
        "POINTS": str(n),
        "DATA": encoding,
    }
    lines += [f"{k} {values[k]}" for k in _HEADER_KEYS]
    return "\n".join(lines) + "\n"


def write_pcd(cloud: PointCloud, path, encoding: str = "binary") -> None:
    if encoding not in ("ascii", "binary"):
        raise ValueError(f"encoding must be ascii or binary, got {encoding!r}")
    n = len(cloud)
    fields = _FIELDS_NORMALS if cloud.has_normals else _FIELDS_RGB
    columns = [cloud.positions.astype(np.float32), pack_rgb(cloud.colors)[:, None]]
    if cloud.has_normals:
        columns.append(cloud.normals.astype(np.float32))
    table = np.hstack(columns) if n else np.zeros((0, len(fields)), np.float32)

    header = _build_header(fields, n, encoding)
    try:
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            if encoding == "binary":
                f.write(np.ascontiguousarray(table, dtype="<f4").tobytes())
            else:
                rows = "\n".join(" ".join(str(v) for v in row) for row in table)
                f.write(rows.encode("ascii"))
                if n:
                    f.write(b"\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _parse_header(raw: bytes, path):
    seen = {}
    offset = 0
    while True:
        end = raw.find(b"\n", offset)
        if end < 0:
            raise ParseError(f"{path}: header ends before DATA line")
        line = raw[offset:end].decode("ascii", errors="replace").strip()
        offset = end + 1
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        seen[key] = rest.strip()
        if key == "DATA":
            return seen, offset
        if len(seen) > 20:
            raise ParseError(f"{path}: not a PCD header")


def read_pcd(path) -> PointCloud:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e

    header, body_offset = _parse_header(raw, path)
    for key in ("FIELDS", "POINTS", "DATA"):
        if key not in header:
            raise ParseError(f"{path}: missing {key} in header")

    fields = header["FIELDS"].split()
    if fields not in _KNOWN_FIELD_SETS:
        raise UnsupportedPcd(f"{path}: unsupported FIELDS {' '.join(fields)}")
    encoding = header["DATA"]
    if encoding not in ("ascii", "binary"):
        raise UnsupportedPcd(f"{path}: unsupported DATA encoding {encoding!r}")
    if header.get("SIZE", "4 " * len(fields)).split() != ["4"] * len(fields):
        raise UnsupportedPcd(f"{path}: only 4-byte fields supported")
    if header.get("TYPE", "F " * len(fields)).split() != ["F"] * len(fields):
        raise UnsupportedPcd(f"{path}: only float fields supported")
    try:
        n = int(header["POINTS"])
    except ValueError:
        raise ParseError(f"{path}: bad POINTS value {header['POINTS']!r}")

    ncols = len(fields)
    if encoding == "binary":
        need = n * ncols * 4
        body = raw[body_offset:body_offset + need]
        if len(body) < need:
            raise ParseError(f"{path}: expected {need} data bytes, found {len(body)}")
        table = np.frombuffer(body, dtype="<f4").reshape(n, ncols)
    else:
        text = raw[body_offset:].decode("ascii", errors="replace")
        try:
            flat = np.array([np.float32(tok) for tok in text.split()], dtype=np.float32)
        except ValueError as e:
            raise ParseError(f"{path}: bad ascii data: {e}") from e
        if flat.size != n * ncols:
            raise ParseError(f"{path}: expected {n * ncols} values, found {flat.size}")
        table = flat.reshape(n, ncols)

    positions = table[:, :3].astype(np.float64)
    if "rgb" in fields:
        colors = unpack_rgb(table[:, 3])
        normal_col = 4
    else:
        colors = np.full((n, 3), 0.5)
        normal_col = 3
    normals = None
    if "normal_x" in fields:
        normals = table[:, normal_col:normal_col + 3].astype(np.float64)
    return PointCloud(positions, colors, normals)
