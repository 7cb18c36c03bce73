"""Point-cloud ops against brute-force oracles and hand-built geometry."""

import math

import numpy as np
import pytest

from rgbd_recon.cloud import (
    KdIndex,
    PointCloud,
    estimate_normals,
    merge,
    transform_cloud,
    voxel_downsample,
)
from rgbd_recon.errors import NormalPresenceMismatch, TooFewPoints
from rgbd_recon.geometry import Pose, Twist, se3_exp


# ---- independent oracles ----------------------------------------------------

def oracle_voxel_bins(points, colors, voxel):
    """Dict-based binning, no vectorization: voxel key -> centroid."""
    bins = {}
    for p, c in zip(points, colors):
        key = tuple(int(math.floor(x / voxel)) for x in p)
        bins.setdefault(key, []).append((p, c))
    out = {}
    for key, members in bins.items():
        ps = np.mean([m[0] for m in members], axis=0)
        cs = np.mean([m[1] for m in members], axis=0)
        out[key] = (ps, cs)
    return out


def oracle_knn(points, query, k):
    """Full distance scan; returns the k smallest (distance, index) pairs."""
    d = np.linalg.norm(points - query, axis=1)
    idx = np.argsort(d, kind="stable")[:k]
    return d[idx], idx


def gray(n):
    return np.full((n, 3), 0.5)


# ---- voxel downsampling -----------------------------------------------------

class TestVoxelDownsample:
    def test_two_points_one_voxel(self):
        c = PointCloud([[0.1, 0.1, 0.1], [0.2, 0.2, 0.2]], [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        out = voxel_downsample(c, 1.0)
        assert len(out) == 1
        np.testing.assert_allclose(out.positions[0], [0.15, 0.15, 0.15])
        np.testing.assert_allclose(out.colors[0], [0.5, 0.5, 0.5])

    def test_two_points_two_voxels(self):
        c = PointCloud([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], gray(2))
        assert len(voxel_downsample(c, 0.5)) == 2

    def test_matches_binning_oracle(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0.0, 1.0, size=(1000, 3))
        cols = rng.uniform(0.0, 1.0, size=(1000, 3))
        voxel = 0.25
        out = voxel_downsample(PointCloud(pts, cols), voxel)

        expected = oracle_voxel_bins(pts, cols, voxel)
        assert len(out) == len(expected)
        for p, c in zip(out.positions, out.colors):
            key = tuple(int(math.floor(x / voxel)) for x in p)
            ep, ec = expected[key]
            np.testing.assert_allclose(p, ep, atol=1e-12)
            np.testing.assert_allclose(c, ec, atol=1e-12)

    def test_output_order_z_then_y_then_x(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-2.0, 2.0, size=(500, 3))
        out = voxel_downsample(PointCloud(pts, gray(500)), 0.3)
        keys = np.floor(out.positions / 0.3).astype(int)
        # ascending lexicographic with z most significant
        flat = keys[:, 2] * 10**8 + keys[:, 1] * 10**4 + keys[:, 0] + 5 * 10**9
        assert np.all(np.diff(flat) > 0)

    def test_points_stay_in_their_voxel(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(0.0, 3.0, size=(800, 3))
        voxel = 0.7
        out = voxel_downsample(PointCloud(pts, gray(800)), voxel)
        assert len(out) <= 800
        lo = np.floor(out.positions / voxel) * voxel
        assert np.all(out.positions >= lo - 1e-12)
        assert np.all(out.positions <= lo + voxel + 1e-12)

    def test_negative_coordinates(self):
        c = PointCloud([[-0.1, -0.1, -0.1], [-0.2, -0.2, -0.2]], gray(2))
        out = voxel_downsample(c, 1.0)
        assert len(out) == 1
        np.testing.assert_allclose(out.positions[0], [-0.15, -0.15, -0.15])

    def test_empty_in_empty_out(self):
        assert len(voxel_downsample(PointCloud.empty(), 0.1)) == 0

    def test_normals_averaged_and_renormalized(self):
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.0, 1.0, 0.0])
        c = PointCloud([[0.1, 0.1, 0.1], [0.2, 0.2, 0.2]], gray(2), [a, b])
        out = voxel_downsample(c, 1.0)
        np.testing.assert_allclose(out.normals[0], [math.sqrt(0.5), math.sqrt(0.5), 0.0], atol=1e-12)

    def test_deterministic_across_input_order(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0.0, 1.0, size=(300, 3))
        c1 = voxel_downsample(PointCloud(pts, gray(300)), 0.2)
        perm = rng.permutation(300)
        c2 = voxel_downsample(PointCloud(pts[perm], gray(300)), 0.2)
        np.testing.assert_allclose(c1.positions, c2.positions, atol=1e-12)


# ---- k-d index ---------------------------------------------------------------

class TestKdIndex:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(-1.0, 1.0, size=(200, 3))
        index = KdIndex(pts)
        queries = rng.uniform(-1.0, 1.0, size=(20, 3))
        for k in range(1, 11):
            d, i = index.knn(queries, k)
            for q in range(len(queries)):
                od, oi = oracle_knn(pts, queries[q], k)
                np.testing.assert_allclose(np.sort(d[q]), np.sort(od), atol=1e-12)
                assert set(i[q].tolist()) == set(oi.tolist())

    def test_nearest_within_marks_misses(self):
        pts = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
        d, i = KdIndex(pts).nearest_within(np.array([[0.1, 0.0, 0.0], [5.0, 0.0, 0.0]]), 1.0)
        assert i[0] == 0 and abs(d[0] - 0.1) < 1e-12
        assert i[1] == -1 and np.isinf(d[1])


# ---- normal estimation -------------------------------------------------------

class TestEstimateNormals:
    def test_plane_faces_viewpoint(self):
        rng = np.random.default_rng(5)
        xy = rng.uniform(-1.0, 1.0, size=(100, 2))
        pts = np.column_stack([xy, np.zeros(100)])
        out = estimate_normals(PointCloud(pts, gray(100)), k=10, viewpoint=(0.0, 0.0, 1.0))
        np.testing.assert_allclose(out.normals, np.tile([0.0, 0.0, 1.0], (100, 1)), atol=1e-6)

    def test_plane_opposite_viewpoint_flips(self):
        rng = np.random.default_rng(6)
        xy = rng.uniform(-1.0, 1.0, size=(100, 2))
        pts = np.column_stack([xy, np.zeros(100)])
        out = estimate_normals(PointCloud(pts, gray(100)), k=10, viewpoint=(0.0, 0.0, -1.0))
        np.testing.assert_allclose(out.normals, np.tile([0.0, 0.0, -1.0], (100, 1)), atol=1e-6)

    def test_sphere_normals_near_pole(self):
        # dense unit sphere; near (0,0,1) the true normal is the radial direction
        rng = np.random.default_rng(7)
        v = rng.normal(size=(4000, 3))
        pts = v / np.linalg.norm(v, axis=1, keepdims=True)
        out = estimate_normals(PointCloud(pts, gray(4000)), k=12, viewpoint=(0.0, 0.0, 10.0))
        near_pole = pts[:, 2] > 0.95
        assert near_pole.sum() > 30
        cosang = np.einsum("ni,ni->n", out.normals[near_pole], pts[near_pole])
        assert np.all(cosang > math.cos(math.radians(5.0)))

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            estimate_normals(PointCloud(np.zeros((5, 3)), gray(5)), k=10)

    def test_unit_length(self):
        rng = np.random.default_rng(8)
        pts = rng.uniform(-1.0, 1.0, size=(150, 3))
        out = estimate_normals(PointCloud(pts, gray(150)), k=8)
        np.testing.assert_allclose(np.linalg.norm(out.normals, axis=1), np.ones(150), atol=1e-12)


# ---- rigid transformation ----------------------------------------------------

class TestTransformCloud:
    def test_identity(self):
        c = PointCloud([[1.0, 2.0, 3.0]], [[0.2, 0.4, 0.6]], [[0.0, 0.0, 1.0]])
        out = transform_cloud(c, Pose.identity())
        np.testing.assert_allclose(out.positions, c.positions)
        np.testing.assert_allclose(out.colors, c.colors)
        np.testing.assert_allclose(out.normals, c.normals)

    def test_pure_translation_leaves_normals(self):
        c = PointCloud([[0.0, 0.0, 0.0]], gray(1), [[1.0, 0.0, 0.0]])
        out = transform_cloud(c, Pose(np.eye(3), [1.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.positions[0], [1.0, 0.0, 0.0])
        np.testing.assert_allclose(out.normals[0], [1.0, 0.0, 0.0])

    def test_quarter_turn_rotates_point_and_normal(self):
        T = se3_exp(Twist([0.0, 0.0, math.pi / 2], np.zeros(3)))
        c = PointCloud([[1.0, 0.0, 0.0]], gray(1), [[1.0, 0.0, 0.0]])
        out = transform_cloud(c, T)
        np.testing.assert_allclose(out.positions[0], [0.0, 1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(out.normals[0], [0.0, 1.0, 0.0], atol=1e-15)

    def test_rigidity(self):
        rng = np.random.default_rng(9)
        pts = rng.uniform(-2.0, 2.0, size=(60, 3))
        T = se3_exp(Twist([0.4, -0.2, 0.7], [1.0, 2.0, -0.5]))
        out = transform_cloud(PointCloud(pts, gray(60)), T)
        d_in = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        d_out = np.linalg.norm(out.positions[:, None, :] - out.positions[None, :, :], axis=2)
        np.testing.assert_allclose(d_out, d_in, atol=1e-9)


# ---- merging -------------------------------------------------------------------

class TestMerge:
    def test_empty_list(self):
        assert len(merge([])) == 0

    def test_single(self):
        a = PointCloud([[1.0, 2.0, 3.0]], [[0.1, 0.2, 0.3]])
        out = merge([a])
        np.testing.assert_allclose(out.positions, a.positions)

    def test_concatenation_order(self):
        a = PointCloud(np.arange(9, dtype=float).reshape(3, 3) / 10.0, gray(3))
        b = PointCloud(np.arange(9, 18, dtype=float).reshape(3, 3) / 100.0, gray(3))
        out = merge([a, b])
        assert len(out) == 6
        np.testing.assert_allclose(out.positions[:3], a.positions)
        np.testing.assert_allclose(out.positions[3:], b.positions)

    def test_normal_presence_mismatch(self):
        a = PointCloud([[0.0, 0.0, 0.0]], gray(1), [[0.0, 0.0, 1.0]])
        b = PointCloud([[1.0, 0.0, 0.0]], gray(1))
        with pytest.raises(NormalPresenceMismatch):
            merge([a, b])


class TestValidation:
    def test_check_rejects_length_mismatch(self):
        c = PointCloud(np.zeros((3, 3)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            c.check()

    def test_check_rejects_out_of_range_color(self):
        c = PointCloud(np.zeros((1, 3)), [[1.5, 0.0, 0.0]])
        with pytest.raises(ValueError):
            c.check()

    def test_check_rejects_non_unit_normal(self):
        c = PointCloud(np.zeros((1, 3)), gray(1), [[2.0, 0.0, 0.0]])
        with pytest.raises(ValueError):
            c.check()
