"""
Window a frame sequence into fragments and chain their base poses.

local_registration splits M frames into ceil(M/N) windows of N, aligns every
pair inside each window, optimizes a small pose graph per window, and fuses
each window into one voxel-downsampled fragment cloud. Fragment k+1's base
pose is chained through the odometry between the last frame of window k and
the first frame of window k+1, so all fragments share one world frame.
"""

import math

import numpy as np

from rgbd_recon.geometry import compose, inverse
from rgbd_recon.ingest import PinholeIntrinsics
from rgbd_recon.odometry import OdometryParams
from rgbd_recon.pipeline import PipelineConfig, local_registration
from rgbd_recon.synthetic import generate_synthetic_sequence, make_orbit_trajectory

M, N = 10, 4
K = PinholeIntrinsics(fx=112.0, fy=112.0, cx=63.5, cy=47.5, width=128, height=96)
nodes, truth = generate_synthetic_sequence(7, make_orbit_trajectory(M), K)
cfg = PipelineConfig(N=N, odometry=OdometryParams(pyramid_levels=2))

frags = local_registration(nodes, K, cfg)
print(f"{M} frames with N={N} -> K={frags.K} fragments "
      f"(ceil({M}/{N}) = {math.ceil(M / N)})")

for k in range(frags.K):
    idx = frags.frame_indices[k]
    n_pts = len(frags.fragments[k])
    # base pose error against the ground-truth pose of the window's first frame
    gt = truth[idx[0] - 1]
    d = compose(inverse(frags.base_poses[k]), gt)
    err_mm = np.linalg.norm(d.translation) * 1000.0
    print(f"  fragment {k}: frames {idx[0]:2d}..{idx[-1]:2d}  "
          f"{n_pts:6d} points  base pose off by {err_mm:.3f} mm")

# the trailing window keeps whatever frames are left, here 10 - 2*4 = 2
assert [len(i) for i in frags.frame_indices] == [4, 4, 2]
print("\ntrailing window keeps the leftover frames rather than dropping them")
