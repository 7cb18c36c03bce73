"""End-to-end reconstruction: windowed fragments, pairwise fragment alignment,
global pose-graph optimization, and the on-disk artifacts tying them together.

The frame sequence is split into consecutive windows of N frames. Within a
window every frame pair is aligned by dense odometry and the results feed a
small pose graph whose optimized poses place each frame's back-projection in
the window's first-frame coordinates; the merged, thinned result is one
fragment. Fragments are chained into a world frame by inter-window odometry,
refined pairwise by ICP, optimized again at the fragment level, and merged
into the final scene cloud.

Stage functions mirror the CLI subcommands and exchange state through files
under the configured output directory, so each stage can also be run on its
own against a previous stage's artifacts.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud, merge, transform_cloud, voxel_downsample
from .errors import ConfigError, IoError, OdometryChainBroken, RgbdReconError
from .geometry import Pose, compose, inverse
from .ingest import (IngestConfig, PinholeIntrinsics, back_project,
                     load_intrinsics, load_sequence)
from .odometry import OdometryParams, compute_odometry, prepare_node
from .pcd_io import read_pcd, write_pcd
from .pose_graph import Edge, OptimizeParams, PoseGraph, optimize
from .registration import FragmentPairResult, register_fragment_pair
from .synthetic import make_orbit_trajectory, write_synthetic_dataset

log = logging.getLogger(__name__)

STATE_FILE = "fragments/state.json"
PAIRS_FILE = "fragments/pairs.json"


@dataclass(frozen=True)
class SynthParams:
    """Settings for the bundled synthetic dataset generator."""

    frames: int = 60
    seed: int = 7
    width: int = 160
    height: int = 120

    def check(self) -> None:
        if self.frames < 1:
            raise ConfigError(f"synth.frames must be >= 1, got {self.frames}")
        if self.width < 8 or self.height < 8:
            raise ConfigError("synth image must be at least 8x8")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the pipeline needs; mirrors the JSON config file."""

    dataset_dir: str = ""
    output_dir: str = ""
    N: int = 15
    voxel_fragment: float = 0.01
    voxel_global: float = 0.05
    icp_distance_coarse: float = 0.15
    icp_distance_fine: float = 0.05
    loop_closure_fragments: bool = False
    depth_scale: float = 1000.0
    depth_trunc: float = 3.0
    workers: int = 1
    odometry: OdometryParams = field(default_factory=OdometryParams)
    optimize: OptimizeParams = field(default_factory=OptimizeParams)
    synth: SynthParams = field(default_factory=SynthParams)

    def check(self) -> None:
        if self.N < 2:
            raise ConfigError(f"N must be >= 2, got {self.N}")
        for name in ("voxel_fragment", "voxel_global", "icp_distance_coarse",
                     "icp_distance_fine", "depth_scale", "depth_trunc"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        self.odometry.check()
        self.optimize.check()
        self.synth.check()


_SECTIONS = {"odometry": OdometryParams, "optimize": OptimizeParams, "synth": SynthParams}


def _build_section(dc_type, name: str, data) -> object:
    if not isinstance(data, dict):
        raise ConfigError(f"config section {name!r} must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(dc_type)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    return dc_type(**data)


def config_from_dict(data) -> PipelineConfig:
    """Build a validated PipelineConfig; unknown keys anywhere are an error."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = (_build_section(_SECTIONS[name], name, value)
                        if name in _SECTIONS else value)
    try:
        cfg = PipelineConfig(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad config value: {e}") from e
    try:
        cfg.check()
    except (ValueError, TypeError) as e:   # nested params raise plain ValueError
        raise ConfigError(str(e)) from e
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise IoError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    return config_from_dict(data)


@dataclass(frozen=True)
class FragmentSet:
    """K fragments, each in its own first frame's coordinates, plus the poses
    placing them in the world frame and the per-frame poses inside each."""

    fragments: tuple
    base_poses: tuple
    node_poses: tuple      # per fragment, one Pose per frame (fragment frame)
    frame_indices: tuple   # per fragment, the source frame index of each node

    @property
    def K(self) -> int:
        return len(self.fragments)


@dataclass(frozen=True)
class PairRecord:
    s: int
    t: int
    uncertain: bool
    result: FragmentPairResult


def _parallel_map(fn, argument_tuples, workers: int) -> list:
    """Apply fn over argument tuples, optionally on a thread pool.

    Results always come back in input order, so a parallel run is
    indistinguishable from a sequential one.
    """
    jobs = list(argument_tuples)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*args) for args in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda args: fn(*args), jobs))


def build_fragment(nodes, K_intr: PinholeIntrinsics, cfg: PipelineConfig, *,
                   preps=None):
    """Fuse one window of frames into a fragment cloud and its pose graph.

    Every in-window pair is aligned: adjacent pairs from identity (these are
    certain edges and must all succeed), longer-range pairs from the composed
    chain estimate (uncertain edges, silently skipped on failure). Node poses
    are expressed in the first frame of the window.
    """
    n = len(nodes)
    if not 2 <= n <= cfg.N:
        raise ValueError(f"window size {n} outside [2, {cfg.N}]")
    params = cfg.odometry
    if preps is None:
        preps = _parallel_map(lambda node: prepare_node(node, K_intr, params),
                              [(node,) for node in nodes], cfg.workers)

    def run_pair(s, t, init):
        return compute_odometry(nodes[s], nodes[t], K_intr, init, params,
                                source_prep=preps[s], target_prep=preps[t])

    adjacent = _parallel_map(run_pair, [(s, s + 1, None) for s in range(n - 1)],
                             cfg.workers)
    for s, res in enumerate(adjacent):
        if not res.success:
            raise OdometryChainBroken(nodes[s].index, nodes[s + 1].index, res.reason)

    node_poses = [Pose.identity()]
    for res in adjacent:
        node_poses.append(compose(node_poses[-1], res.pose))
    edges = [Edge(s, s + 1, res.pose, res.information)
             for s, res in enumerate(adjacent)]

    inv_poses = [inverse(p) for p in node_poses]
    skip_pairs = [(s, t, compose(inv_poses[s], node_poses[t]))
                  for s in range(n) for t in range(s + 2, n)]
    for (s, t, _), res in zip(skip_pairs,
                              _parallel_map(run_pair, skip_pairs, cfg.workers)):
        if res.success:
            edges.append(Edge(s, t, res.pose, res.information, uncertain=True))
        else:
            log.info("skip pair (%d, %d) dropped: %s",
                     nodes[s].index, nodes[t].index, res.reason)

    result = optimize(PoseGraph(node_poses, edges), cfg.optimize)
    if not result.converged:
        log.warning("fragment graph stopped after %d iterations without converging",
                    result.iterations)
    graph = result.graph
    clouds = [transform_cloud(back_project(node, K_intr), pose)
              for node, pose in zip(nodes, graph.nodes)]
    fragment = voxel_downsample(merge(clouds), cfg.voxel_fragment)
    return fragment, graph


def local_registration(nodes, K_intr: PinholeIntrinsics,
                       cfg: PipelineConfig) -> FragmentSet:
    """Partition frames into windows of N, build each fragment, chain bases.

    The base pose of fragment k+1 comes from composing fragment k's base, the
    last in-window pose of fragment k, and the odometry between the last frame
    of window k and the first frame of window k+1.
    """
    M = len(nodes)
    if M < 2:
        raise ValueError(f"need at least 2 frames, got {M}")
    params = cfg.odometry
    preps = _parallel_map(lambda node: prepare_node(node, K_intr, params),
                          [(node,) for node in nodes], cfg.workers)
    spans = [(a, min(a + cfg.N, M)) for a in range(0, M, cfg.N)]

    def build(a, b):
        if b - a == 1:   # a trailing lone frame still forms a fragment
            cloud = voxel_downsample(back_project(nodes[a], K_intr),
                                     cfg.voxel_fragment)
            return cloud, PoseGraph([Pose.identity()], [])
        return build_fragment(nodes[a:b], K_intr, cfg, preps=preps[a:b])

    built = _parallel_map(build, spans, cfg.workers)
    fragments = [cloud for cloud, _ in built]
    node_poses = [tuple(graph.nodes) for _, graph in built]

    base_poses = [Pose.identity()]
    for k in range(len(spans) - 1):
        last = spans[k][1] - 1
        first = spans[k + 1][0]
        res = compute_odometry(nodes[last], nodes[first], K_intr, None, params,
                               source_prep=preps[last], target_prep=preps[first])
        if not res.success:
            raise OdometryChainBroken(nodes[last].index, nodes[first].index, res.reason)
        base_poses.append(compose(base_poses[-1],
                                  compose(node_poses[k][-1], res.pose)))

    frame_indices = [tuple(node.index for node in nodes[a:b]) for a, b in spans]
    return FragmentSet(tuple(fragments), tuple(base_poses),
                       tuple(node_poses), tuple(frame_indices))


def _aabb_overlap(a: PointCloud, b: PointCloud) -> bool:
    a_lo, a_hi = a.positions.min(axis=0), a.positions.max(axis=0)
    b_lo, b_hi = b.positions.min(axis=0), b.positions.max(axis=0)
    return bool(np.all(a_lo <= b_hi) and np.all(b_lo <= a_hi))


def register_fragments(frags: FragmentSet, cfg: PipelineConfig) -> list:
    """Pairwise ICP between world-placed fragments.

    Consecutive pairs always produce a record (certain edges). With
    loop_closure_fragments set, non-adjacent pairs whose bounding boxes
    overlap are tried as well; those that fail the overlap gate are dropped.
    """
    placed = [transform_cloud(f, T)
              for f, T in zip(frags.fragments, frags.base_poses)]
    jobs = [(k, k + 1, False) for k in range(len(placed) - 1)]
    if cfg.loop_closure_fragments:
        for i in range(len(placed)):
            for j in range(i + 2, len(placed)):
                if _aabb_overlap(placed[i], placed[j]):
                    jobs.append((i, j, True))

    results = _parallel_map(
        lambda i, j, _: register_fragment_pair(placed[i], placed[j], None, cfg, k=i),
        jobs, cfg.workers)
    records = []
    for (i, j, uncertain), res in zip(jobs, results):
        if uncertain and res.no_overlap:
            log.info("loop candidate (%d, %d) rejected: fitness %.3f", i, j, res.fitness)
            continue
        records.append(PairRecord(i, j, uncertain, res))
    return records


def _fragment_graph(frags: FragmentSet, records) -> PoseGraph:
    """Fragment-level graph: nodes are world poses, edges come from ICP.

    ICP measures a world-frame correction V between placed clouds; the edge
    measurement is that correction conjugated into the fragments' own frames.
    """
    edges = []
    for rec in records:
        base_s, base_t = frags.base_poses[rec.s], frags.base_poses[rec.t]
        measurement = compose(inverse(base_s), compose(rec.result.pose, base_t))
        info = rec.result.information
        if rec.result.no_overlap or not np.isfinite(info).all() or np.trace(info) <= 0:
            # a chain edge must still constrain the graph, however weakly
            info = np.eye(6)
        edges.append(Edge(rec.s, rec.t, measurement, info, uncertain=rec.uncertain))
    return PoseGraph(list(frags.base_poses), edges)


def _integrate(frags: FragmentSet, records, cfg: PipelineConfig):
    """Optimize fragment poses and merge. Returns (scene, poses, stats)."""
    if frags.K == 1:
        scene = voxel_downsample(frags.fragments[0], cfg.voxel_global)
        return scene, [frags.base_poses[0]], {"edges_total": 0, "edges_pruned": 0}
    graph = _fragment_graph(frags, records)
    result = optimize(graph, cfg.optimize)
    if not result.converged:
        log.warning("fragment-level graph stopped after %d iterations without converging",
                    result.iterations)
    placed = [transform_cloud(f, pose)
              for f, pose in zip(frags.fragments, result.graph.nodes)]
    scene = voxel_downsample(merge(placed), cfg.voxel_global)
    stats = {"edges_total": len(graph.edges),
             "edges_pruned": len(result.pruned_edges)}
    return scene, list(result.graph.nodes), stats


def global_registration(frags: FragmentSet, cfg: PipelineConfig) -> PointCloud:
    """Register fragment pairs, optimize their poses, merge into one cloud."""
    records = register_fragments(frags, cfg) if frags.K > 1 else []
    scene, _, _ = _integrate(frags, records, cfg)
    return scene


# ---------------------------------------------------------------------------
# stage drivers: each runs standalone against the previous stage's artifacts


def _stage_guard(name: str, exc: RgbdReconError) -> RgbdReconError:
    exc.args = (f"[{name}] {exc.args[0]}" if exc.args else f"[{name}]",) + exc.args[1:]
    return exc


def _pose_to_list(pose: Pose) -> list:
    return [float(x) for x in pose.matrix().reshape(-1)]


def _pose_from_list(values) -> Pose:
    M = np.asarray(values, dtype=np.float64).reshape(4, 4)
    return Pose(M[:3, :3], M[:3, 3])


def _fragment_path(cfg: PipelineConfig, k: int) -> str:
    return os.path.join(cfg.output_dir, "fragments", f"fragment_{k:03d}.pcd")


def stage_synth(cfg: PipelineConfig):
    """Render the configured synthetic dataset plus its ground-truth file."""
    s = cfg.synth
    K_intr = PinholeIntrinsics(fx=0.875 * s.width, fy=0.875 * s.width,
                               cx=s.width / 2.0 - 0.5, cy=s.height / 2.0 - 0.5,
                               width=s.width, height=s.height)
    trajectory = make_orbit_trajectory(s.frames)
    write_synthetic_dataset(cfg.dataset_dir, s.seed, trajectory, K_intr,
                            depth_scale=cfg.depth_scale)
    log.info("wrote %d synthetic frames under %s", s.frames, cfg.dataset_dir)


def stage_make_fragments(cfg: PipelineConfig) -> FragmentSet:
    """Ingest the dataset and write fragment clouds plus their pose state."""
    started = time.perf_counter()
    try:
        nodes = load_sequence(IngestConfig(cfg.dataset_dir, cfg.depth_scale,
                                           cfg.depth_trunc))
        K_intr = load_intrinsics(os.path.join(cfg.dataset_dir, "intrinsics.json"))
        frags = local_registration(nodes, K_intr, cfg)
    except RgbdReconError as e:
        raise _stage_guard("make-fragments", e)
    seconds = time.perf_counter() - started

    os.makedirs(os.path.join(cfg.output_dir, "fragments"), exist_ok=True)
    for k, cloud in enumerate(frags.fragments):
        write_pcd(cloud, _fragment_path(cfg, k))
    state = {
        "frames": sum(len(ix) for ix in frags.frame_indices),
        "N": cfg.N,
        "K": frags.K,
        "base_poses": [_pose_to_list(p) for p in frags.base_poses],
        "node_poses": [[_pose_to_list(p) for p in poses]
                       for poses in frags.node_poses],
        "frame_indices": [list(ix) for ix in frags.frame_indices],
        "seconds": seconds,
    }
    with open(os.path.join(cfg.output_dir, STATE_FILE), "w") as f:
        json.dump(state, f)
    log.info("make-fragments: %d frames -> %d fragments in %.1fs",
             state["frames"], frags.K, seconds)
    return frags


def _load_state(cfg: PipelineConfig) -> tuple:
    path = os.path.join(cfg.output_dir, STATE_FILE)
    try:
        with open(path) as f:
            state = json.load(f)
    except OSError as e:
        raise IoError(f"missing fragment state {path}; run make-fragments first "
                      f"({e})") from e
    fragments = tuple(read_pcd(_fragment_path(cfg, k)) for k in range(state["K"]))
    frags = FragmentSet(
        fragments,
        tuple(_pose_from_list(p) for p in state["base_poses"]),
        tuple(tuple(_pose_from_list(p) for p in poses)
              for poses in state["node_poses"]),
        tuple(tuple(ix) for ix in state["frame_indices"]),
    )
    return frags, state


def stage_register_fragments(cfg: PipelineConfig) -> list:
    """Run fragment-pair ICP against stored fragments; write pair records."""
    frags, _ = _load_state(cfg)
    started = time.perf_counter()
    try:
        records = register_fragments(frags, cfg)
    except RgbdReconError as e:
        raise _stage_guard("register-fragments", e)
    seconds = time.perf_counter() - started

    payload = {
        "seconds": seconds,
        "pairs": [{
            "s": rec.s,
            "t": rec.t,
            "uncertain": rec.uncertain,
            "no_overlap": rec.result.no_overlap,
            "fitness": rec.result.fitness,
            "rmse": rec.result.rmse,
            "pose": _pose_to_list(rec.result.pose),
            "information": [float(x) for x in rec.result.information.reshape(-1)],
        } for rec in records],
    }
    with open(os.path.join(cfg.output_dir, PAIRS_FILE), "w") as f:
        json.dump(payload, f)
    log.info("register-fragments: %d pair(s) in %.1fs", len(records), seconds)
    return records


def _load_pairs(cfg: PipelineConfig) -> tuple:
    path = os.path.join(cfg.output_dir, PAIRS_FILE)
    try:
        with open(path) as f:
            payload = json.load(f)
    except OSError as e:
        raise IoError(f"missing pair records {path}; run register-fragments first "
                      f"({e})") from e
    records = [
        PairRecord(p["s"], p["t"], p["uncertain"], FragmentPairResult(
            k=p["s"], pose=_pose_from_list(p["pose"]),
            information=np.asarray(p["information"]).reshape(6, 6),
            fitness=p["fitness"], rmse=p["rmse"], no_overlap=p["no_overlap"]))
        for p in payload["pairs"]
    ]
    return records, payload["seconds"]


def stage_integrate(cfg: PipelineConfig) -> dict:
    """Optimize fragment poses, merge the scene, write all final artifacts."""
    frags, state = _load_state(cfg)
    if frags.K > 1 or os.path.exists(os.path.join(cfg.output_dir, PAIRS_FILE)):
        records, register_seconds = _load_pairs(cfg)
    else:   # a single fragment needs no pair stage
        records, register_seconds = [], 0.0
    started = time.perf_counter()
    try:
        scene, fragment_poses, stats = _integrate(frags, records, cfg)
    except RgbdReconError as e:
        raise _stage_guard("integrate", e)
    seconds = time.perf_counter() - started

    write_pcd(scene, os.path.join(cfg.output_dir, "scene.pcd"))

    lines = []
    for world_pose, locals_, indices in zip(fragment_poses, frags.node_poses,
                                            frags.frame_indices):
        for local, frame in zip(locals_, indices):
            world = compose(world_pose, local)
            values = " ".join("%.17g" % v for v in world.matrix().reshape(-1))
            lines.append(f"{frame} {values}")
    with open(os.path.join(cfg.output_dir, "trajectory.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")

    fitnesses = [rec.result.fitness for rec in records]
    report = {
        "frames": state["frames"],
        "N": state["N"],
        "K": frags.K,
        "edges_total": stats["edges_total"],
        "edges_pruned": stats["edges_pruned"],
        "mean_fitness": float(np.mean(fitnesses)) if fitnesses else 1.0,
        "stage_seconds": {
            "make_fragments": state["seconds"],
            "register_fragments": register_seconds,
            "integrate": seconds,
        },
    }
    with open(os.path.join(cfg.output_dir, "report.json"), "w") as f:
        json.dump(report, f, indent=2)
    log.info("integrate: scene of %d points, K=%d, in %.1fs",
             len(scene), frags.K, seconds)
    return report


def run_all(cfg: PipelineConfig) -> dict:
    """The three pipeline stages in sequence, through the same artifacts."""
    cfg.check()
    stage_make_fragments(cfg)
    stage_register_fragments(cfg)
    return stage_integrate(cfg)


def run_pipeline(config_path) -> dict:
    """Load the config and run every stage; returns the report dict."""
    return run_all(load_config(config_path))
