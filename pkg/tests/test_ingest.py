"""Dataset loading and pinhole back-projection."""

import json
import os

import cv2
import numpy as np
import pytest

from rgbd_recon.errors import (
    InvalidIntrinsics,
    IoError,
    MismatchedPair,
    ParseError,
    SizeMismatch,
)
from rgbd_recon.ingest import (
    IngestConfig,
    PinholeIntrinsics,
    RgbdNode,
    back_project,
    load_intrinsics,
    load_sequence,
    project,
)

K_STD = PinholeIntrinsics(fx=525.0, fy=525.0, cx=319.5, cy=239.5, width=640, height=480)


def write_intrinsics(path, **overrides):
    data = {"fx": 525.0, "fy": 525.0, "cx": 319.5, "cy": 239.5, "width": 640, "height": 480}
    data.update(overrides)
    with open(path, "w") as f:
        json.dump(data, f)


def write_dataset(root, n_frames, width=8, height=6, depth_value=1500):
    os.makedirs(os.path.join(root, "color"))
    os.makedirs(os.path.join(root, "depth"))
    write_intrinsics(os.path.join(root, "intrinsics.json"),
                     fx=10.0, fy=10.0, cx=width / 2 - 0.5, cy=height / 2 - 0.5,
                     width=width, height=height)
    for i in range(1, n_frames + 1):
        color = np.full((height, width, 3), i * 10 % 255, dtype=np.uint8)
        depth = np.full((height, width), depth_value, dtype=np.uint16)
        cv2.imwrite(os.path.join(root, "color", f"{i:06d}.png"), color)
        cv2.imwrite(os.path.join(root, "depth", f"{i:06d}.png"), depth)


class TestLoadIntrinsics:
    def test_echoes_file_values(self, tmp_path):
        p = tmp_path / "intrinsics.json"
        write_intrinsics(p)
        K = load_intrinsics(p)
        assert K == K_STD

    def test_zero_focal_rejected(self, tmp_path):
        p = tmp_path / "intrinsics.json"
        write_intrinsics(p, fx=0.0)
        with pytest.raises(InvalidIntrinsics):
            load_intrinsics(p)

    def test_principal_point_outside_rejected(self, tmp_path):
        p = tmp_path / "intrinsics.json"
        write_intrinsics(p, cx=700.0)
        with pytest.raises(InvalidIntrinsics):
            load_intrinsics(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_intrinsics(tmp_path / "absent.json")

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "intrinsics.json"
        p.write_text("{not json")
        with pytest.raises(ParseError):
            load_intrinsics(p)

    def test_missing_key(self, tmp_path):
        p = tmp_path / "intrinsics.json"
        p.write_text(json.dumps({"fx": 500.0}))
        with pytest.raises(ParseError):
            load_intrinsics(p)


class TestLoadSequence:
    def test_loads_all_frames_in_order(self, tmp_path):
        write_dataset(tmp_path, 5)
        nodes = load_sequence(IngestConfig(dataset_root=str(tmp_path)))
        assert [n.index for n in nodes] == [1, 2, 3, 4, 5]

    def test_depth_scale_conversion(self, tmp_path):
        write_dataset(tmp_path, 2, depth_value=1500)
        nodes = load_sequence(IngestConfig(dataset_root=str(tmp_path), depth_scale=1000.0))
        assert nodes[0].depth[0, 0] == pytest.approx(1.5)

    def test_truncation_zeroes_far_depth(self, tmp_path):
        write_dataset(tmp_path, 2, depth_value=8000)
        nodes = load_sequence(IngestConfig(dataset_root=str(tmp_path), depth_trunc=4.0))
        assert np.all(nodes[0].depth == 0.0)

    def test_mismatched_pair(self, tmp_path):
        write_dataset(tmp_path, 3)
        os.remove(tmp_path / "depth" / "000002.png")
        with pytest.raises(MismatchedPair):
            load_sequence(IngestConfig(dataset_root=str(tmp_path)))

    def test_size_mismatch(self, tmp_path):
        write_dataset(tmp_path, 2)
        wrong = np.zeros((12, 16, 3), dtype=np.uint8)
        cv2.imwrite(str(tmp_path / "color" / "000001.png"), wrong)
        with pytest.raises(SizeMismatch):
            load_sequence(IngestConfig(dataset_root=str(tmp_path)))

    def test_empty_dataset(self, tmp_path):
        os.makedirs(tmp_path / "color")
        os.makedirs(tmp_path / "depth")
        write_intrinsics(tmp_path / "intrinsics.json")
        with pytest.raises(IoError):
            load_sequence(IngestConfig(dataset_root=str(tmp_path)))


class TestBackProject:
    def test_principal_point_goes_to_axis(self):
        depth = np.zeros((480, 640))
        # cx, cy are half-integers; use a synthetic K with integer center
        K = PinholeIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)
        depth[240, 320] = 1.0
        node = RgbdNode(1, np.zeros((480, 640, 3), np.uint8), depth)
        cloud = back_project(node, K)
        assert len(cloud) == 1
        np.testing.assert_allclose(cloud.positions[0], [0.0, 0.0, 1.0], atol=1e-15)

    def test_pinhole_equation_by_hand(self):
        # x = (u - cx) z / fx = (420 - 320) * 2 / 500 = 0.4
        K = PinholeIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)
        depth = np.zeros((480, 640))
        depth[240, 420] = 2.0
        node = RgbdNode(1, np.zeros((480, 640, 3), np.uint8), depth)
        cloud = back_project(node, K)
        np.testing.assert_allclose(cloud.positions[0], [0.4, 0.0, 2.0], atol=1e-15)

    def test_all_invalid_gives_empty(self):
        node = RgbdNode(1, np.zeros((6, 8, 3), np.uint8), np.zeros((6, 8)))
        K = PinholeIntrinsics(fx=10.0, fy=10.0, cx=3.5, cy=2.5, width=8, height=6)
        assert len(back_project(node, K)) == 0

    def test_point_count_equals_valid_pixels(self):
        rng = np.random.default_rng(0)
        depth = rng.uniform(0.5, 2.0, size=(6, 8))
        depth[rng.uniform(size=(6, 8)) < 0.3] = 0.0
        K = PinholeIntrinsics(fx=10.0, fy=10.0, cx=3.5, cy=2.5, width=8, height=6)
        node = RgbdNode(1, np.zeros((6, 8, 3), np.uint8), depth)
        assert len(back_project(node, K)) == int((depth > 0).sum())

    def test_colors_scaled_to_unit(self):
        color = np.zeros((6, 8, 3), np.uint8)
        color[2, 3] = (255, 128, 0)
        depth = np.zeros((6, 8))
        depth[2, 3] = 1.0
        K = PinholeIntrinsics(fx=10.0, fy=10.0, cx=3.5, cy=2.5, width=8, height=6)
        cloud = back_project(RgbdNode(1, color, depth), K)
        np.testing.assert_allclose(cloud.colors[0], [1.0, 128 / 255.0, 0.0])

    def test_reprojection_round_trip(self):
        rng = np.random.default_rng(1)
        K = PinholeIntrinsics(fx=80.0, fy=75.0, cx=31.5, cy=23.5, width=64, height=48)
        depth = rng.uniform(0.5, 3.0, size=(48, 64))
        node = RgbdNode(1, np.zeros((48, 64, 3), np.uint8), depth)
        cloud = back_project(node, K)
        u, v, z = project(cloud.positions, K)
        vv, uu = np.nonzero(node.valid_mask)
        np.testing.assert_allclose(u, uu, atol=0.5)
        np.testing.assert_allclose(v, vv, atol=0.5)
        np.testing.assert_array_equal(z, depth[vv, uu])
