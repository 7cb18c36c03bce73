"""Seeded synthetic RGB-D sequences: the test oracle that replaces the sensor.

The scene is the interior of an axis-aligned box with a checkerboard albedo
modulated by smooth value noise, so every surface carries both sharp and
dense low-frequency intensity gradients. Frames are rendered by exact ray
casting against the six faces; the stored depth is the camera-frame z of the
hit, so back-projection reproduces hit points to rounding error.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import EmptyTrajectory
from .geometry import Pose, Twist, se3_exp
from .ingest import PinholeIntrinsics, RgbdNode


@dataclass(frozen=True)
class RoomScene:
    """Box interior with per-face procedural albedo. Build via make_scene."""

    bounds_min: np.ndarray
    bounds_max: np.ndarray
    checker_size: float
    noise_cell: float
    checker_colors: np.ndarray   # 6×2×3
    noise_grids: np.ndarray      # 6×G×G in [0,1]

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point to the nearest box face (exact for interior points)."""
        points = np.asarray(points).reshape(-1, 3)
        d_lo = points - self.bounds_min
        d_hi = self.bounds_max - points
        inside = np.all(d_lo >= 0, axis=1) & np.all(d_hi >= 0, axis=1)
        dist = np.minimum(d_lo.min(axis=1), d_hi.min(axis=1))
        # outside: clamp to the box and measure euclidean distance
        clamped = np.clip(points, self.bounds_min, self.bounds_max)
        outside_d = np.linalg.norm(points - clamped, axis=1)
        return np.where(inside, np.abs(dist), outside_d)


def make_scene(seed: int,
               bounds_min=(-2.0, -1.5, -1.25),
               bounds_max=(2.0, 1.5, 1.25),
               checker_size: float = 0.4,
               noise_cell: float = 0.31,
               noise_grid: int = 64) -> RoomScene:
    rng = np.random.default_rng(seed)
    colors = rng.uniform(0.25, 0.95, size=(6, 2, 3))
    grids = rng.uniform(0.0, 1.0, size=(6, noise_grid, noise_grid))
    return RoomScene(
        bounds_min=np.asarray(bounds_min, dtype=np.float64),
        bounds_max=np.asarray(bounds_max, dtype=np.float64),
        checker_size=checker_size,
        noise_cell=noise_cell,
        checker_colors=colors,
        noise_grids=grids,
    )


def _face_albedo(scene: RoomScene, face: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # smooth checkerboard: a sinusoidal blend rather than a hard parity flip,
    # so the image stays band-limited and resampling stays consistent between
    # nearby viewpoints
    wa = 0.5 * (1.0 + np.sin(2.0 * np.pi * a / scene.checker_size))
    wb = 0.5 * (1.0 + np.sin(2.0 * np.pi * b / scene.checker_size))
    blend = (wa * wb + (1.0 - wa) * (1.0 - wb))[:, None]
    c0, c1 = scene.checker_colors[face, 0], scene.checker_colors[face, 1]
    base = c0 * blend + c1 * (1.0 - blend)

    g = scene.noise_grids[face]
    G = g.shape[0]
    xa, xb = a / scene.noise_cell, b / scene.noise_cell
    i0, j0 = np.floor(xa).astype(np.int64), np.floor(xb).astype(np.int64)
    fa, fb = xa - i0, xb - j0
    i0 %= G
    j0 %= G
    i1, j1 = (i0 + 1) % G, (j0 + 1) % G
    noise = (g[i0, j0] * (1 - fa) * (1 - fb) + g[i1, j0] * fa * (1 - fb)
             + g[i0, j1] * (1 - fa) * fb + g[i1, j1] * fa * fb)
    return base * (0.55 + 0.45 * noise[:, None])


def render_frame(scene: RoomScene, K: PinholeIntrinsics, camera_to_world: Pose):
    """Returns (color uint8 H×W×3, depth float64 H×W meters)."""
    H, W = K.height, K.width
    us, vs = np.meshgrid(np.arange(W, dtype=np.float64), np.arange(H, dtype=np.float64))
    dirs_cam = np.stack([(us - K.cx) / K.fx, (vs - K.cy) / K.fy, np.ones_like(us)], axis=-1)
    d = dirs_cam @ camera_to_world.rotation.T
    o = camera_to_world.translation

    planes = [(k, scene.bounds_min[k]) for k in range(3)] + [(k, scene.bounds_max[k]) for k in range(3)]
    t_best = np.full((H, W), np.inf)
    face_best = np.full((H, W), -1, dtype=np.int64)
    a_best = np.zeros((H, W))
    b_best = np.zeros((H, W))
    for face, (k, plane) in enumerate(planes):
        ka, kb = [ax for ax in range(3) if ax != k]
        dk = d[..., k]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (plane - o[k]) / dk
        pa = o[ka] + t * d[..., ka]
        pb = o[kb] + t * d[..., kb]
        tol = 1e-9
        ok = (
            np.isfinite(t) & (t > 1e-9)
            & (pa >= scene.bounds_min[ka] - tol) & (pa <= scene.bounds_max[ka] + tol)
            & (pb >= scene.bounds_min[kb] - tol) & (pb <= scene.bounds_max[kb] + tol)
            & (t < t_best)
        )
        t_best[ok] = t[ok]
        face_best[ok] = face
        a_best[ok] = pa[ok]
        b_best[ok] = pb[ok]

    color = np.zeros((H, W, 3), dtype=np.float64)
    for face in range(6):
        mask = face_best == face
        if mask.any():
            color[mask] = _face_albedo(scene, face, a_best[mask], b_best[mask])
    depth = np.where(face_best >= 0, t_best, 0.0)
    color8 = np.clip(np.round(color * 255.0), 0, 255).astype(np.uint8)
    return color8, depth


def generate_synthetic_sequence(scene_seed: int, trajectory, K: PinholeIntrinsics,
                                scene: RoomScene = None):
    """Render one RgbdNode per pose. Returns (nodes, ground-truth poses).

    Poses map camera coordinates into the world frame. Depth is kept at full
    float precision; use write_synthetic_dataset for quantized on-disk output.
    """
    if not trajectory:
        raise EmptyTrajectory("trajectory must contain at least one pose")
    if scene is None:
        scene = make_scene(scene_seed)
    nodes = []
    for i, pose in enumerate(trajectory):
        color, depth = render_frame(scene, K, pose)
        nodes.append(RgbdNode(index=i + 1, color=color, depth=depth))
    return nodes, list(trajectory)


def make_orbit_trajectory(n_frames: int, radius: float = 0.4,
                          arc: float = 0.9, yaw_amount: float = 0.35,
                          bob: float = 0.1) -> list:
    """Smooth interior camera path: a horizontal arc with gentle yaw and bob."""
    poses = []
    for i in range(n_frames):
        s = i / max(n_frames - 1, 1)
        angle = arc * s
        t = np.array([radius * np.sin(angle), bob * np.sin(2.1 * angle), -radius * (1 - np.cos(angle))])
        yaw = yaw_amount * s
        pitch = 0.08 * np.sin(1.7 * angle)
        R = se3_exp(Twist([0.0, yaw, 0.0], np.zeros(3))).rotation
        Rp = se3_exp(Twist([pitch, 0.0, 0.0], np.zeros(3))).rotation
        poses.append(Pose(R @ Rp, t))
    return poses


def write_synthetic_dataset(root, scene_seed: int, trajectory, K: PinholeIntrinsics,
                            depth_scale: float = 1000.0, scene: RoomScene = None):
    """Write a rendered sequence in the on-disk dataset layout; returns the poses.

    Depth is quantized to 16-bit integers in units of 1/depth_scale meters,
    which bounds the stored-depth error by half a unit.
    """
    nodes, poses = generate_synthetic_sequence(scene_seed, trajectory, K, scene=scene)
    os.makedirs(os.path.join(root, "color"), exist_ok=True)
    os.makedirs(os.path.join(root, "depth"), exist_ok=True)
    with open(os.path.join(root, "intrinsics.json"), "w") as f:
        json.dump({"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy,
                   "width": K.width, "height": K.height}, f, indent=2)
    for node in nodes:
        name = f"{node.index:06d}.png"
        bgr = cv2.cvtColor(node.color, cv2.COLOR_RGB2BGR)
        cv2.imwrite(os.path.join(root, "color", name), bgr)
        q = np.clip(np.round(node.depth * depth_scale), 0, 65535).astype(np.uint16)
        cv2.imwrite(os.path.join(root, "depth", name), q)
    with open(os.path.join(root, "ground_truth.txt"), "w") as f:
        from .geometry import format_pose_matrix
        for node, pose in zip(nodes, poses):
            f.write(f"{node.index} {format_pose_matrix(pose)}\n")
    return poses
