"""Regenerate the PCD fixtures under tests/fixtures.

Everything here comes out of the reconstruction pipeline's public surface:
write_pcd for the small synthetic clouds, and the rgbd-recon CLI for a real
(tiny) end-to-end scene.pcd. Sidecar JSON files carry the exact float32
values so the TypeScript tests can compare without tolerance fudging.

Run from the frontend directory:  python scripts/make_fixtures.py
"""

import json
import os
import shutil
import subprocess
import tempfile

import numpy as np

from rgbd_recon.cloud import PointCloud
from rgbd_recon.pcd_io import write_pcd

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")


def f32_list(a):
    # float32 values are exactly representable as doubles, so json keeps them
    return np.asarray(a, dtype=np.float32).astype(np.float64).ravel().tolist()


def make_random100():
    rng = np.random.default_rng(42)
    pos = rng.uniform(-2.0, 2.0, (100, 3))
    col = rng.uniform(0.0, 1.0, (100, 3))
    cloud = PointCloud(pos, col)
    write_pcd(cloud, os.path.join(FIXTURES, "random100.pcd"), encoding="binary")
    write_pcd(cloud, os.path.join(FIXTURES, "random100_ascii.pcd"), encoding="ascii")
    sidecar = {
        "point_count": 100,
        "positions": f32_list(pos),
        "colors_u8": np.clip(np.round(col * 255), 0, 255).astype(int).ravel().tolist(),
    }
    with open(os.path.join(FIXTURES, "random100.json"), "w") as f:
        json.dump(sidecar, f)


def make_with_normals():
    rng = np.random.default_rng(7)
    pos = rng.normal(0.0, 1.0, (60, 3))
    col = rng.uniform(0.0, 1.0, (60, 3))
    nrm = rng.normal(0.0, 1.0, (60, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    cloud = PointCloud(pos, col, nrm)
    write_pcd(cloud, os.path.join(FIXTURES, "with_normals.pcd"), encoding="binary")
    sidecar = {"point_count": 60, "positions": f32_list(pos)}
    with open(os.path.join(FIXTURES, "with_normals.json"), "w") as f:
        json.dump(sidecar, f)


def make_scene():
    work = tempfile.mkdtemp(prefix="viewer_fixture_")
    try:
        cfg = {
            "dataset_dir": os.path.join(work, "data"),
            "output_dir": os.path.join(work, "out"),
            "N": 8,
            "synth": {"frames": 24, "seed": 7, "width": 128, "height": 96},
        }
        cfg_path = os.path.join(work, "config.json")
        with open(cfg_path, "w") as f:
            json.dump(cfg, f)
        subprocess.run(["rgbd-recon", "synth", cfg_path], check=True)
        subprocess.run(["rgbd-recon", "run-all", cfg_path], check=True)
        shutil.copy(os.path.join(work, "out", "scene.pcd"),
                    os.path.join(FIXTURES, "scene.pcd"))
    finally:
        shutil.rmtree(work, ignore_errors=True)


if __name__ == "__main__":
    os.makedirs(FIXTURES, exist_ok=True)
    make_random100()
    make_with_normals()
    make_scene()
    for name in sorted(os.listdir(FIXTURES)):
        path = os.path.join(FIXTURES, name)
        print(f"{name}: {os.path.getsize(path)} bytes")
