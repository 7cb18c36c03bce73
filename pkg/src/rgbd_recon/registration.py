"""Fragment-to-fragment alignment by multiscale point-to-plane ICP.

Two resolution levels: a coarse pass on clouds thinned at twice the global
voxel size with a wide correspondence radius, then a fine pass at the global
voxel size with a tight radius. Each pass alternates nearest-neighbor
correspondence search against the target with a closed-form linearized update
of the warp. The returned pose follows the same convention as odometry: it
maps target coordinates into the source fragment's frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cloud import KdIndex, PointCloud, estimate_normals, voxel_downsample
from .errors import TooSparse
from .geometry import Pose, Twist, apply, compose, inverse, se3_exp

log = logging.getLogger(__name__)

MIN_FRAGMENT_POINTS = 100
NO_OVERLAP_FITNESS = 0.05
_MIN_CORRESPONDENCES = 6
_NORMAL_NEIGHBORS = 30
_EIG_RATIO_FLOOR = 1e-6


@dataclass(frozen=True)
class IcpConfig:
    """Resolution and gating distances for the two-level alignment."""

    voxel_global: float = 0.05
    icp_distance_coarse: float = 0.15
    icp_distance_fine: float = 0.05


@dataclass(frozen=True)
class FragmentPairResult:
    k: int
    pose: Pose
    information: np.ndarray
    fitness: float
    rmse: float
    no_overlap: bool = False

    def __post_init__(self):
        info = np.asarray(self.information, dtype=np.float64).reshape(6, 6)
        object.__setattr__(self, "information", info)
        if not 0.0 <= self.fitness <= 1.0:
            raise ValueError(f"fitness {self.fitness} outside [0, 1]")


def _icp_pass(src_points, tgt_points, tgt_normals, U, max_distance,
              max_iters=30, tol=1e-6):
    """Refine the source-to-target warp U at one resolution level.

    Returns (U, H, fitness, rmse) where H, fitness and rmse are evaluated at
    the pose actually returned, so the information matrix describes the final
    set of normal equations rather than the second-to-last one.
    """
    index = KdIndex(tgt_points)
    for _ in range(max_iters):
        warped = apply(U, src_points)
        _, idx = index.nearest_within(warped, max_distance)
        hit = idx >= 0
        if int(hit.sum()) < _MIN_CORRESPONDENCES:
            break
        p = warped[hit]
        q = tgt_points[idx[hit]]
        n = tgt_normals[idx[hit]]
        r = np.einsum("ij,ij->i", p - q, n)
        J = np.hstack([np.cross(p, n), n])
        # solve in the eigenbasis and freeze near-null directions: when the
        # geometry is degenerate (a lone plane, parallel faces) the weak modes
        # carry only correspondence noise, and stepping along them walks the
        # pose arbitrarily far without changing the residual
        w, V = np.linalg.eigh(J.T @ J)
        keep = w > _EIG_RATIO_FLOOR * w[-1]
        delta = V[:, keep] @ ((V[:, keep].T @ -(J.T @ r)) / w[keep])
        U = compose(se3_exp(Twist.from_vector(delta)), U)
        if np.linalg.norm(delta) < tol:
            break

    warped = apply(U, src_points)
    dist, idx = index.nearest_within(warped, max_distance)
    hit = idx >= 0
    n_hit = int(hit.sum())
    H = np.zeros((6, 6))
    rmse = 0.0
    if n_hit:
        p = warped[hit]
        n = tgt_normals[idx[hit]]
        J = np.hstack([np.cross(p, n), n])
        H = J.T @ J
        rmse = float(np.sqrt(np.mean(dist[hit] ** 2)))
    return U, H, n_hit / len(src_points), rmse


def register_fragment_pair(source: PointCloud, target: PointCloud,
                           init: Pose | None = None, cfg: IcpConfig | None = None,
                           k: int = 0) -> FragmentPairResult:
    """Align two fragments; the result pose maps target coordinates into source.

    Raises TooSparse when either cloud thins below MIN_FRAGMENT_POINTS at the
    fine resolution. A fitness below NO_OVERLAP_FITNESS flags the result and
    the pose falls back to init rather than reporting a hallucinated alignment.
    """
    cfg = cfg if cfg is not None else IcpConfig()
    init = init if init is not None else Pose.identity()

    fine_src = voxel_downsample(source, cfg.voxel_global)
    fine_tgt = voxel_downsample(target, cfg.voxel_global)
    if len(fine_src) < MIN_FRAGMENT_POINTS or len(fine_tgt) < MIN_FRAGMENT_POINTS:
        raise TooSparse(
            f"pair {k}: {len(fine_src)} and {len(fine_tgt)} points after "
            f"downsampling at {cfg.voxel_global} m, need {MIN_FRAGMENT_POINTS}")

    # the optimized variable warps source points into the target frame
    U = inverse(init)

    coarse_src = voxel_downsample(source, 2.0 * cfg.voxel_global)
    coarse_tgt = voxel_downsample(target, 2.0 * cfg.voxel_global)
    if len(coarse_tgt) >= _NORMAL_NEIGHBORS and len(coarse_src) >= _MIN_CORRESPONDENCES:
        coarse_tgt = estimate_normals(coarse_tgt, k=_NORMAL_NEIGHBORS)
        U, _, _, _ = _icp_pass(coarse_src.positions, coarse_tgt.positions,
                               coarse_tgt.normals, U, cfg.icp_distance_coarse)

    fine_tgt = estimate_normals(fine_tgt, k=_NORMAL_NEIGHBORS)
    U, H, fitness, rmse = _icp_pass(fine_src.positions, fine_tgt.positions,
                                    fine_tgt.normals, U, cfg.icp_distance_fine)

    pose = inverse(U)
    no_overlap = fitness < NO_OVERLAP_FITNESS
    if no_overlap:
        log.warning("pair %d: fitness %.3f below %.2f, keeping initial pose",
                    k, fitness, NO_OVERLAP_FITNESS)
        pose = init
    return FragmentPairResult(k=k, pose=pose, information=0.5 * (H + H.T),
                              fitness=float(fitness), rmse=rmse,
                              no_overlap=no_overlap)
