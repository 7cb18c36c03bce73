"""Shared helpers for tests."""

import math

import numpy as np

from rgbd_recon.cloud import PointCloud
from rgbd_recon.geometry import Pose, Twist, compose, inverse, se3_exp
from rgbd_recon.pose_graph import Edge, PoseGraph

BOX_HALF = np.array([1.0, 0.75, 0.6])


def pose_error(estimate, truth):
    """(translation error meters, rotation error radians) between two poses."""
    d = compose(inverse(truth), estimate)
    trans = float(np.linalg.norm(d.translation))
    c = np.clip((np.trace(d.rotation) - 1.0) / 2.0, -1.0, 1.0)
    return trans, float(np.arccos(c))


def box_cloud(rng, n, margin=0.2, offset=(0.0, 0.0, 0.0), half=BOX_HALF):
    """Points on the six inner faces of a box, kept away from the edges.

    The margin keeps every k-NN neighborhood on a single face so estimated
    normals are exact, which makes alignment failures attributable to the
    solver rather than to corner smearing.
    """
    per_face = n // 6
    pts = []
    for axis in range(3):
        lo = -(half - margin)
        hi = half - margin
        for sign in (-1.0, 1.0):
            p = rng.uniform(lo, hi, size=(per_face, 3))
            p[:, axis] = sign * half[axis]
            pts.append(p)
    pts = np.concatenate(pts) + np.asarray(offset)
    colors = rng.uniform(0.1, 0.9, size=pts.shape)
    return PointCloud(pts, colors)


def small_pose(rng, max_angle_deg=5.0, max_trans=0.05):
    w = rng.normal(size=3)
    w *= math.radians(rng.uniform(1.0, max_angle_deg)) / np.linalg.norm(w)
    v = rng.uniform(-max_trans, max_trans, size=3)
    return se3_exp(Twist(w, v))


def random_pose(rng, angle=0.4, trans=1.0):
    w = rng.normal(size=3)
    w *= rng.uniform(0, angle) / np.linalg.norm(w)
    return se3_exp(Twist(w, rng.uniform(-trans, trans, size=3)))


def random_info(rng, scale=1.0):
    A = rng.normal(size=(6, 6))
    return scale * (A @ A.T + 6.0 * np.eye(6))


def consistent_chain(rng, n, angle=0.3, trans=0.5, info_scale=1.0):
    """Ground-truth poses by composing random measurements; graph initialized at truth."""
    measurements = [random_pose(rng, angle, trans) for _ in range(n - 1)]
    nodes = [Pose.identity()]
    for m in measurements:
        nodes.append(compose(nodes[-1], m))
    edges = [Edge(i, i + 1, measurements[i], random_info(rng, info_scale))
             for i in range(n - 1)]
    return PoseGraph(nodes, edges), nodes
