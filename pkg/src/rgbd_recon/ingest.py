"""Load recorded color/depth pairs from disk and back-project them to clouds.

Expected dataset layout:

    <root>/intrinsics.json      keys fx, fy, cx, cy, width, height
    <root>/color/000001.png     8-bit RGB, numbered from 1
    <root>/depth/000001.png     16-bit single channel, units of 1/depth_scale m

Color and depth are assumed pixel-aligned already.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from typing import Optional

import cv2
import numpy as np

from .cloud import PointCloud
from .errors import (
    InvalidIntrinsics,
    IoError,
    MismatchedPair,
    ParseError,
    SizeMismatch,
)

_FRAME_RE = re.compile(r"^(\d{6})\.png$")


@dataclass(frozen=True)
class PinholeIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def check(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidIntrinsics(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 < self.cx < self.width) or not (0 < self.cy < self.height):
            raise InvalidIntrinsics(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    def halved(self) -> "PinholeIntrinsics":
        """Intrinsics after a 2x2 box downsample.

        A coarse pixel u' covers fine pixels 2u' and 2u'+1, so its center
        sits at 2u' + 0.5 in fine coordinates; solving u = 2u' + 0.5 gives
        the offset below (plain halving of cx would bias by a quarter pixel).
        """
        return PinholeIntrinsics(
            self.fx / 2, self.fy / 2,
            (self.cx - 0.5) / 2, (self.cy - 0.5) / 2,
            self.width // 2, self.height // 2,
        )

    def with_size(self, width: int, height: int) -> "PinholeIntrinsics":
        return PinholeIntrinsics(self.fx, self.fy, self.cx, self.cy, width, height)


@dataclass(frozen=True)
class RgbdNode:
    """One frame: 1-based index, 8-bit color, depth in meters (0 = no data)."""

    index: int
    color: np.ndarray
    depth: np.ndarray

    @property
    def valid_mask(self) -> np.ndarray:
        return self.depth > 0.0

    def intensity(self) -> np.ndarray:
        """Mean of the three channels, scaled to [0, 1], float64."""
        return self.color.astype(np.float64).mean(axis=2) / 255.0


@dataclass(frozen=True)
class IngestConfig:
    dataset_root: str
    depth_scale: float = 1000.0
    depth_trunc: float = 3.0

    def check(self) -> None:
        if self.depth_scale <= 0:
            raise ValueError(f"depth_scale must be positive, got {self.depth_scale}")
        if self.depth_trunc <= 0:
            raise ValueError(f"depth_trunc must be positive, got {self.depth_trunc}")


def load_intrinsics(path) -> PinholeIntrinsics:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ParseError(f"cannot read intrinsics {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"bad intrinsics JSON in {path}: {e}") from e
    try:
        K = PinholeIntrinsics(
            fx=float(data["fx"]), fy=float(data["fy"]),
            cx=float(data["cx"]), cy=float(data["cy"]),
            width=int(data["width"]), height=int(data["height"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"intrinsics {path} missing or non-numeric key: {e}") from e
    K.check()
    return K


def _scan_frames(directory) -> dict:
    try:
        names = os.listdir(directory)
    except OSError as e:
        raise IoError(f"cannot list {directory}: {e}") from e
    frames = {}
    for name in names:
        m = _FRAME_RE.match(name)
        if m:
            frames[int(m.group(1))] = os.path.join(directory, name)
    return frames


def load_sequence(cfg: IngestConfig) -> list:
    """All frames under cfg.dataset_root, ordered by frame number."""
    cfg.check()
    K = load_intrinsics(os.path.join(cfg.dataset_root, "intrinsics.json"))
    colors = _scan_frames(os.path.join(cfg.dataset_root, "color"))
    depths = _scan_frames(os.path.join(cfg.dataset_root, "depth"))

    only_color = sorted(set(colors) - set(depths))
    only_depth = sorted(set(depths) - set(colors))
    if only_color or only_depth:
        raise MismatchedPair(
            f"frames without a partner: color-only {only_color[:5]}, depth-only {only_depth[:5]}"
        )
    if not colors:
        raise IoError(f"no frames found under {cfg.dataset_root}")

    nodes = []
    for index in sorted(colors):
        bgr = cv2.imread(colors[index], cv2.IMREAD_COLOR)
        raw_depth = cv2.imread(depths[index], cv2.IMREAD_UNCHANGED)
        if bgr is None:
            raise IoError(f"cannot decode {colors[index]}")
        if raw_depth is None:
            raise IoError(f"cannot decode {depths[index]}")
        if raw_depth.ndim != 2:
            raise ParseError(f"{depths[index]}: depth must be single channel")
        color = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
        if color.shape[:2] != (K.height, K.width) or raw_depth.shape != (K.height, K.width):
            raise SizeMismatch(
                f"frame {index}: color {color.shape[:2]}, depth {raw_depth.shape}, "
                f"intrinsics {K.height}x{K.width}"
            )
        depth = raw_depth.astype(np.float64) / cfg.depth_scale
        depth[depth > cfg.depth_trunc] = 0.0
        nodes.append(RgbdNode(index=index, color=color, depth=depth))
    return nodes


def back_project(node: RgbdNode, K: PinholeIntrinsics) -> PointCloud:
    """Colored cloud in the camera frame, one point per pixel with depth > 0."""
    if node.depth.shape != (K.height, K.width):
        raise SizeMismatch(
            f"depth {node.depth.shape} does not match intrinsics {K.height}x{K.width}"
        )
    valid = node.valid_mask
    v, u = np.nonzero(valid)
    z = node.depth[v, u]
    x = (u - K.cx) * z / K.fx
    y = (v - K.cy) * z / K.fy
    positions = np.column_stack([x, y, z])
    colors = node.color[v, u].astype(np.float64) / 255.0
    return PointCloud(positions, colors)


def project(points: np.ndarray, K: PinholeIntrinsics):
    """Inverse of back_project: (u, v) pixel coordinates and depth per point."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = points[:, 2]
    u = points[:, 0] * K.fx / np.where(z != 0, z, 1.0) + K.cx
    v = points[:, 1] * K.fy / np.where(z != 0, z, 1.0) + K.cy
    return u, v, z
