"""Colored point clouds and the operations the pipeline needs on them.

Clouds are treated as immutable values: every operation returns a new
PointCloud and never writes through an input array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import NormalPresenceMismatch, TooFewPoints
from .geometry import Pose, apply


@dataclass(frozen=True)
class PointCloud:
    """positions in meters, colors in [0, 1], optional unit normals."""

    positions: np.ndarray
    colors: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "colors", np.asarray(self.colors, dtype=np.float64).reshape(-1, 3))
        if self.normals is not None:
            object.__setattr__(self, "normals", np.asarray(self.normals, dtype=np.float64).reshape(-1, 3))

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    @staticmethod
    def empty(with_normals: bool = False) -> "PointCloud":
        z = np.zeros((0, 3))
        return PointCloud(z, z.copy(), z.copy() if with_normals else None)

    def check(self, atol: float = 1e-6) -> None:
        """Validate the container invariants; raises ValueError on corruption."""
        n = len(self)
        if self.colors.shape[0] != n:
            raise ValueError(f"colors length {self.colors.shape[0]} != positions length {n}")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("non-finite position")
        if self.colors.size and (self.colors.min() < 0.0 or self.colors.max() > 1.0):
            raise ValueError("color outside [0, 1]")
        if self.normals is not None:
            if self.normals.shape[0] != n:
                raise ValueError(f"normals length {self.normals.shape[0]} != positions length {n}")
            norms = np.linalg.norm(self.normals, axis=1)
            if norms.size and np.max(np.abs(norms - 1.0)) > atol:
                raise ValueError("normal not unit length")


class KdIndex:
    """Immutable 3-d tree over a cloud's positions; safe for concurrent queries."""

    def __init__(self, positions: np.ndarray):
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        self._n = positions.shape[0]
        self._tree = cKDTree(positions) if self._n else None

    def __len__(self) -> int:
        return self._n

    def knn(self, queries: np.ndarray, k: int):
        """k nearest neighbors of each query row; returns (distances Q×k, indices Q×k)."""
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        d, i = self._tree.query(queries, k=k)
        if k == 1:
            d, i = d[:, None], i[:, None]
        return d, i

    def nearest_within(self, queries: np.ndarray, max_distance: float):
        """Nearest neighbor within max_distance; index -1 (distance inf) where none."""
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        d, i = self._tree.query(queries, k=1, distance_upper_bound=max_distance)
        i = np.where(np.isinf(d), -1, i)
        return d, i


def voxel_downsample(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """One centroid per occupied cell of the grid floor(p / voxel_size).

    Output order is ascending lexicographic in the integer cell key, z major,
    then y, then x, so repeated runs produce identical files.
    """
    if voxel_size <= 0:
        raise ValueError(f"voxel_size must be positive, got {voxel_size}")
    n = len(cloud)
    if n == 0:
        return cloud
    keys = np.floor(cloud.positions / voxel_size).astype(np.int64)
    order = np.lexsort((keys[:, 0], keys[:, 1], keys[:, 2]))
    keys = keys[order]
    boundary = np.any(keys[1:] != keys[:-1], axis=1)
    starts = np.concatenate(([0], np.nonzero(boundary)[0] + 1))
    counts = np.diff(np.concatenate((starts, [n])))[:, None].astype(np.float64)

    positions = np.add.reduceat(cloud.positions[order], starts, axis=0) / counts
    colors = np.add.reduceat(cloud.colors[order], starts, axis=0) / counts
    normals = None
    if cloud.normals is not None:
        normals = np.add.reduceat(cloud.normals[order], starts, axis=0)
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        # members may cancel exactly; keep such normals as +z rather than NaN
        degenerate = lengths[:, 0] < 1e-12
        normals[degenerate] = (0.0, 0.0, 1.0)
        lengths[degenerate] = 1.0
        normals /= lengths
    return PointCloud(positions, colors, normals)


def estimate_normals(cloud: PointCloud, k: int = 30, viewpoint=(0.0, 0.0, 0.0)) -> PointCloud:
    """Per-point normal = smallest-eigenvalue eigenvector of the k-NN covariance.

    Signs are flipped so every normal faces the viewpoint: n · (viewpoint − p) ≥ 0.
    """
    n = len(cloud)
    if k < 3:
        raise ValueError(f"need k >= 3 neighbors, got {k}")
    if n < k:
        raise TooFewPoints(f"{n} points but k = {k}")
    viewpoint = np.asarray(viewpoint, dtype=np.float64)

    _, idx = KdIndex(cloud.positions).knn(cloud.positions, k)
    nbrs = cloud.positions[idx]                      # N×k×3
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    _, vecs = np.linalg.eigh(cov)                    # ascending eigenvalues
    normals = vecs[:, :, 0]
    flip = np.einsum("ni,ni->n", normals, viewpoint - cloud.positions) < 0.0
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(cloud.positions, cloud.colors, normals)


def transform_cloud(cloud: PointCloud, T: Pose) -> PointCloud:
    """Map positions by T and rotate normals; colors pass through."""
    positions = apply(T, cloud.positions) if len(cloud) else cloud.positions
    normals = cloud.normals @ T.rotation.T if cloud.normals is not None else None
    return PointCloud(positions, cloud.colors, normals)


def merge(clouds: list) -> PointCloud:
    """Concatenate clouds in order. All must agree on whether normals are present."""
    if not clouds:
        return PointCloud.empty()
    with_normals = clouds[0].has_normals
    for c in clouds:
        if c.has_normals != with_normals:
            raise NormalPresenceMismatch("cannot merge clouds with and without normals")
    positions = np.concatenate([c.positions for c in clouds], axis=0)
    colors = np.concatenate([c.colors for c in clouds], axis=0)
    normals = np.concatenate([c.normals for c in clouds], axis=0) if with_normals else None
    return PointCloud(positions, colors, normals)
