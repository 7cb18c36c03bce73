"""Dense RGB-D odometry between two frames.

Estimates the relative pose T_(s,t) (mapping target-frame coordinates into
the source frame) by Gauss-Newton over an image pyramid. Each source pixel
with valid depth is back-projected, moved by the current transform, and
projected into the target image; the photometric residual is the intensity
difference, optionally joined by a depth-consistency residual. Internally the
solver works on U = T_(s,t)^-1 (the source-to-target warp) with left
increments exp(delta) * U, and returns U^-1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._kernels import reduce_normal_equations, warp_residuals
from .errors import TooSmall
from .geometry import Pose, Twist, compose, inverse, se3_exp
from .ingest import PinholeIntrinsics, RgbdNode

log = logging.getLogger(__name__)

HUBER_DELTA = 0.1          # intensity units, images live in [0, 1]
CONDITION_LIMIT = 1e12
ZERO_OBJECTIVE = 1e-18


@dataclass(frozen=True)
class OdometryParams:
    pyramid_levels: int = 3
    max_iters_per_level: int = 10
    min_valid_pixels: Optional[int] = None   # None: 3% of image area
    convergence_tol: float = 1e-6
    use_depth_term: bool = True
    depth_weight: float = 0.5

    def check(self) -> None:
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.max_iters_per_level < 1:
            raise ValueError("max_iters_per_level must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be > 0")
        if self.depth_weight < 0:
            raise ValueError("depth_weight must be >= 0")


@dataclass(frozen=True)
class TraceEntry:
    level: int
    iteration: int
    rmse: float
    step_norm: float
    objective: float


@dataclass(frozen=True)
class OdometryResult:
    success: bool
    pose: Pose                  # T_(s,t)
    information: np.ndarray     # 6x6, J^T W J at the finest level
    final_rmse: float
    valid_pixel_count: int
    reason: str = ""
    trace: tuple = ()


def _downsample_color(color: np.ndarray) -> np.ndarray:
    c = color.astype(np.float64)
    s = c[0::2, 0::2] + c[0::2, 1::2] + c[1::2, 0::2] + c[1::2, 1::2]
    return np.clip(np.round(s / 4.0), 0, 255).astype(np.uint8)


def _downsample_depth(depth: np.ndarray) -> np.ndarray:
    blocks = np.stack([depth[0::2, 0::2], depth[0::2, 1::2],
                       depth[1::2, 0::2], depth[1::2, 1::2]])
    valid = blocks > 0.0
    count = valid.sum(axis=0)
    total = np.where(valid, blocks, 0.0).sum(axis=0)
    return np.where(count > 0, total / np.maximum(count, 1), 0.0)


def build_pyramid(node: RgbdNode, levels: int, min_size: int = 8) -> list:
    """levels images, finest first; each next level is a 2x downsample.

    Color uses a 2x2 box filter; depth averages only the valid members of
    each 2x2 block (0 when none). The input is cropped at the bottom/right
    to make its dims divisible by 2^(levels-1). TooSmall if any level would
    fall under min_size pixels on a side.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w = node.depth.shape
    factor = 2 ** (levels - 1)
    h0, w0 = (h // factor) * factor, (w // factor) * factor
    for level in range(levels):
        if (h0 >> level) < min_size or (w0 >> level) < min_size:
            raise TooSmall(
                f"level {level} would be {w0 >> level}x{h0 >> level}, floor is {min_size}x{min_size}"
            )
    if (h0, w0) == (h, w):
        out = [node]
        color, depth = node.color, node.depth
    else:
        color = node.color[:h0, :w0]
        depth = node.depth[:h0, :w0]
        out = [RgbdNode(node.index, color, depth)]
    for _ in range(levels - 1):
        color = _downsample_color(color)
        depth = _downsample_depth(depth)
        out.append(RgbdNode(node.index, color, depth))
    return out


@dataclass(frozen=True)
class NodePyramid:
    """Per-level data compute_odometry needs; build once, reuse across pairs."""

    nodes: list
    intrinsics: list
    intensity: list   # float64 images
    depth: list       # float64 images
    points: list      # (n, 3) back-projected valid pixels
    values: list      # (n,) their intensities


def prepare_node(node: RgbdNode, K: PinholeIntrinsics, params: OdometryParams = None) -> NodePyramid:
    params = params or OdometryParams()
    pyramid = build_pyramid(node, params.pyramid_levels)
    h0, w0 = pyramid[0].depth.shape
    Ks = [K.with_size(w0, h0)]
    for _ in range(params.pyramid_levels - 1):
        Ks.append(Ks[-1].halved())

    intensity, depth, points, values = [], [], [], []
    for lvl, n in enumerate(pyramid):
        gray = np.ascontiguousarray(n.intensity())
        d = np.ascontiguousarray(n.depth)
        Kl = Ks[lvl]
        v, u = np.nonzero(d > 0.0)
        z = d[v, u]
        pts = np.column_stack([(u - Kl.cx) * z / Kl.fx, (v - Kl.cy) * z / Kl.fy, z])
        intensity.append(gray)
        depth.append(d)
        points.append(np.ascontiguousarray(pts))
        values.append(np.ascontiguousarray(gray[v, u]))
    return NodePyramid(pyramid, Ks, intensity, depth, points, values)


@dataclass
class _Eval:
    count: int
    objective: float
    rmse: float
    H: np.ndarray
    g: np.ndarray


def evaluate_residuals(points, values, U: Pose, K: PinholeIntrinsics,
                       intensity_t, depth_t, params: OdometryParams):
    """One linearization: per-pixel residual rows from the compiled kernel.

    Returns (r_p, J_p, r_d, J_d, uv, valid). Exposed for verification; the
    solver consumes it through _evaluate.
    """
    return warp_residuals(points, values, U.rotation, U.translation,
                          K.fx, K.fy, K.cx, K.cy, intensity_t, depth_t,
                          params.use_depth_term)


def _evaluate(points, values, U, K, intensity_t, depth_t, params) -> _Eval:
    r_p, J_p, r_d, J_d, _, valid = warp_residuals(
        points, values, U.rotation, U.translation, K.fx, K.fy, K.cx, K.cy,
        intensity_t, depth_t, params.use_depth_term)
    n, objective, r2, H, g = reduce_normal_equations(
        r_p, J_p, r_d, J_d, valid, params.use_depth_term,
        params.depth_weight, HUBER_DELTA)
    if n == 0:
        return _Eval(0, math.inf, math.inf, H, g)
    return _Eval(n, objective / n, math.sqrt(r2 / n), H, g)


_IDENTITY = Pose.identity()


def _min_valid(params: OdometryParams, K: PinholeIntrinsics, level: int) -> int:
    base = params.min_valid_pixels
    if base is None:
        base = math.ceil(0.03 * K.width * K.height)
    return max(1, math.ceil(base / 4 ** level))


def compute_odometry(source: RgbdNode, target: RgbdNode, K: PinholeIntrinsics,
                     init: Pose = None, params: OdometryParams = None, *,
                     source_prep: NodePyramid = None,
                     target_prep: NodePyramid = None) -> OdometryResult:
    """Align target to source; returns T_(s,t) with its information matrix.

    Failure is reported through success=False with a reason, never an
    exception: "min_valid_pixels" when too few pixels overlap at some level,
    "singular" when the normal equations are unusable (condition > 1e12).
    """
    params = params or OdometryParams()
    params.check()
    if init is None:
        init = U = _IDENTITY
    else:
        U = inverse(init)
    sp = source_prep or prepare_node(source, K, params)
    tp = target_prep or prepare_node(target, K, params)
    K0 = sp.intrinsics[0]
    trace = []
    failure = None
    info = np.zeros((6, 6))
    final_rmse = math.inf
    count_finest = 0

    for level in range(params.pyramid_levels - 1, -1, -1):
        pts, vals = sp.points[level], sp.values[level]
        It, Zt = tp.intensity[level], tp.depth[level]
        Kl = sp.intrinsics[level]
        floor = _min_valid(params, K0, level)

        ev = _evaluate(pts, vals, U, Kl, It, Zt, params)
        if ev.count < floor:
            failure = ("min_valid_pixels", ev.count)
            break

        for iteration in range(params.max_iters_per_level):
            if ev.objective < ZERO_OBJECTIVE:
                break
            cond = np.linalg.cond(ev.H)
            if not np.isfinite(cond) or cond > CONDITION_LIMIT:
                failure = ("singular", ev.count)
                break
            delta = np.linalg.solve(ev.H, -ev.g)

            accepted = None
            step = delta
            for _ in range(6):   # full step, then up to 5 halvings
                U_try = compose(se3_exp(Twist.from_vector(step)), U)
                ev_try = _evaluate(pts, vals, U_try, Kl, It, Zt, params)
                if ev_try.count >= floor and ev_try.objective <= ev.objective:
                    accepted = (U_try, ev_try, float(np.linalg.norm(step)))
                    break
                step = step / 2.0
            if accepted is None:
                break
            previous = ev.objective
            U, ev, step_norm = accepted
            trace.append(TraceEntry(level, iteration, ev.rmse, step_norm, ev.objective))
            log.debug("odometry level=%d iter=%d rmse=%.6e step=%.3e",
                      level, iteration, ev.rmse, step_norm)
            if previous - ev.objective <= params.convergence_tol * previous:
                break
        if failure is not None:
            break
        if level == 0:
            info = 0.5 * (ev.H + ev.H.T)
            final_rmse = ev.rmse
            count_finest = ev.count

    if failure is not None:
        reason, count = failure
        return OdometryResult(False, init, np.zeros((6, 6)), math.inf, count,
                              reason=reason, trace=tuple(trace))
    pose = init if U is _IDENTITY else inverse(U)   # no step taken: exactly init
    return OdometryResult(True, pose, info, final_rmse, count_finest,
                          trace=tuple(trace))
