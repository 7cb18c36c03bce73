"""Pose graphs over SE(3) and their robust optimization.

Nodes are absolute poses, edges relative measurements weighted by information
matrices. Optimization alternates closed-form line-process weights on
uncertain edges with Levenberg-Marquardt steps, node 0 held fixed as gauge.
The same machinery serves both the per-window frame graphs and the global
fragment graph.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from ._kernels import chain_log
from .errors import AngleNearPi, Disconnected
from .geometry import (
    PI_MARGIN,
    SMALL_ANGLE,
    Pose,
    Twist,
    adjoint,
    compose,
    format_pose_matrix,
    inverse,
    se3_exp,
    se3_left_jacobian_inverse,
    se3_right_jacobian_inverse,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Edge:
    s: int
    t: int
    measurement: Pose           # target-into-source, like odometry output
    information: np.ndarray
    uncertain: bool = False

    def __post_init__(self):
        object.__setattr__(self, "information",
                           np.asarray(self.information, dtype=np.float64).reshape(6, 6))


@dataclass
class PoseGraph:
    nodes: list
    edges: list

    def check(self, atol: float = 1e-9) -> None:
        n = len(self.nodes)
        if n and np.max(np.abs(self.nodes[0].matrix() - np.eye(4))) > atol:
            raise ValueError("node 0 must be the identity (gauge)")
        for i, e in enumerate(self.edges):
            if not (0 <= e.s < e.t < n):
                raise ValueError(f"edge {i} references invalid nodes ({e.s}, {e.t})")
            if np.max(np.abs(e.information - e.information.T)) > atol:
                raise ValueError(f"edge {i} information not symmetric")
            if np.min(np.linalg.eigvalsh(0.5 * (e.information + e.information.T))) < -atol:
                raise ValueError(f"edge {i} information not PSD")


@dataclass(frozen=True)
class OptimizeParams:
    max_outer_iters: int = 50
    lm_damping_init: float = 1e-4
    edge_prune_threshold: float = 0.25
    # line-process scale; conventionally the square of the maximum
    # correspondence distance of the stage that produced the edges
    mu: float = 0.0025
    convergence: float = 1e-8

    def check(self) -> None:
        for name in ("max_outer_iters", "lm_damping_init", "edge_prune_threshold",
                     "mu", "convergence"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class OptimizeResult:
    graph: PoseGraph
    converged: bool
    iterations: int
    objective: float
    line_weights: tuple        # one per edge; 1.0 for certain edges
    pruned_edges: tuple        # indices of uncertain edges with weight < threshold


def edge_residual(graph: PoseGraph, e: Edge) -> np.ndarray:
    """r = log(Z^-1 Xs^-1 Xt); zero iff the poses satisfy the measurement."""
    Xs, Xt, Z = graph.nodes[e.s], graph.nodes[e.t], e.measurement
    r, near_pi = chain_log(Z.rotation, Z.translation, Xs.rotation, Xs.translation,
                           Xt.rotation, Xt.translation, SMALL_ANGLE, PI_MARGIN)
    if near_pi:
        raise AngleNearPi(f"edge ({e.s}, {e.t}) residual rotation within "
                          f"{PI_MARGIN} of pi")
    return r


def _check_connected(graph: PoseGraph) -> None:
    n = len(graph.nodes)
    if n == 0:
        return
    adj = [[] for _ in range(n)]
    for e in graph.edges:
        adj[e.s].append(e.t)
        adj[e.t].append(e.s)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in adj[i]:
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    if not seen.all():
        missing = np.nonzero(~seen)[0]
        raise Disconnected(f"nodes unreachable from node 0: {missing[:8].tolist()}")


def _edge_residuals(graph: PoseGraph) -> list:
    return [edge_residual(graph, e) for e in graph.edges]


def _weights_of(edges, residuals, mu: float) -> list:
    """Closed-form line-process minimizer per uncertain edge; certain stay 1."""
    weights = []
    for e, r in zip(edges, residuals):
        if e.uncertain:
            q = float(r @ e.information @ r)
            weights.append((mu / (mu + q)) ** 2)
        else:
            weights.append(1.0)
    return weights


def _objective_of(edges, residuals, line_weights, mu: float) -> float:
    total = 0.0
    for e, r, l in zip(edges, residuals, line_weights):
        q = float(r @ e.information @ r)
        if e.uncertain:
            total += l * q + mu * (math.sqrt(l) - 1.0) ** 2
        else:
            total += q
    return total


def objective_value(graph: PoseGraph, line_weights, mu: float) -> float:
    """Robust objective: certain edges quadratic, uncertain scaled by their
    line weight plus the mu (sqrt(l) - 1)^2 penalty."""
    return _objective_of(graph.edges, _edge_residuals(graph), line_weights, mu)


def assemble_normal_equations(graph: PoseGraph, line_weights, residuals=None):
    """Gauss-Newton H and g over all non-gauge variables.

    Returns (H, g) with 6 variables per node starting at node 1; g is half
    the gradient of objective_value with line weights held fixed. Passing
    residuals skips recomputing them.
    """
    if residuals is None:
        residuals = _edge_residuals(graph)
    V = len(graph.nodes)
    dim = 6 * (V - 1)
    H = np.zeros((dim, dim))
    g = np.zeros(dim)
    for e, l, r in zip(graph.edges, line_weights, residuals):
        omega = e.information * (l if e.uncertain else 1.0)
        J_t = se3_right_jacobian_inverse(Twist.from_vector(r))
        J_s = -se3_left_jacobian_inverse(Twist.from_vector(r)) @ adjoint(inverse(e.measurement))
        blocks = []
        if e.s > 0:
            blocks.append((6 * (e.s - 1), J_s))
        if e.t > 0:
            blocks.append((6 * (e.t - 1), J_t))
        for off_i, J_i in blocks:
            g[off_i:off_i + 6] += J_i.T @ omega @ r
            for off_j, J_j in blocks:
                H[off_i:off_i + 6, off_j:off_j + 6] += J_i.T @ omega @ J_j
    return H, g


def _apply_increments(nodes, delta):
    out = [nodes[0]]
    for i in range(1, len(nodes)):
        d = delta[6 * (i - 1):6 * i]
        out.append(compose(nodes[i], se3_exp(Twist.from_vector(d))))
    return out


def _line_weights(graph: PoseGraph, mu: float):
    return _weights_of(graph.edges, _edge_residuals(graph), mu)


def optimize(graph: PoseGraph, params: OptimizeParams = None) -> OptimizeResult:
    """Minimize the robust edge objective; node 0 never moves.

    Alternates closed-form line-process weights with damped Gauss-Newton
    steps (multiplicative damping on the Hessian diagonal). Hitting
    max_outer_iters without meeting the relative-decrease threshold returns
    converged=False with the best poses found.
    """
    params = params or OptimizeParams()
    params.check()
    _check_connected(graph)

    work = PoseGraph(list(graph.nodes), graph.edges)
    if len(work.nodes) <= 1 or not work.edges:
        return OptimizeResult(work, True, 0, 0.0,
                              tuple(1.0 for _ in work.edges), ())

    lam = params.lm_damping_init
    residuals = _edge_residuals(work)
    weights = _weights_of(work.edges, residuals, params.mu)
    obj = _objective_of(work.edges, residuals, weights, params.mu)
    converged = False
    outer = 0

    for outer in range(1, params.max_outer_iters + 1):
        if obj < 1e-30:
            converged = True
            break

        H, g = assemble_normal_equations(work, weights, residuals)
        accepted = False
        for _ in range(12):
            damped = H + lam * np.diag(np.diag(H))
            try:
                c = scipy.linalg.cho_factor(damped, check_finite=False)
                delta = scipy.linalg.cho_solve(c, -g, check_finite=False)
            except scipy.linalg.LinAlgError:
                lam *= 10.0
                continue
            candidate = PoseGraph(_apply_increments(work.nodes, delta), work.edges)
            cand_residuals = _edge_residuals(candidate)
            cand_weights = _weights_of(candidate.edges, cand_residuals, params.mu)
            cand_obj = _objective_of(candidate.edges, cand_residuals,
                                     cand_weights, params.mu)
            if cand_obj <= obj:
                work = candidate
                residuals = cand_residuals
                weights = cand_weights
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no descent step exists at this damping range: treat as converged
            converged = True
            break

        log.debug("pose graph iter=%d objective=%.6e lambda=%.1e", outer, cand_obj, lam)
        if obj - cand_obj <= params.convergence * max(obj, 1e-300):
            obj = cand_obj
            converged = True
            break
        obj = cand_obj

    pruned = tuple(i for i, (e, l) in enumerate(zip(work.edges, weights))
                   if e.uncertain and l < params.edge_prune_threshold)
    return OptimizeResult(work, converged, outer, obj, tuple(weights), pruned)


def dump_graph(graph: PoseGraph, path) -> None:
    """Diagnostic text dump: NODE and EDGE lines with full precision."""
    iu = np.triu_indices(6)
    with open(path, "w") as f:
        for i, node in enumerate(graph.nodes):
            f.write(f"NODE {i} {format_pose_matrix(node)}\n")
        for e in graph.edges:
            info = " ".join(f"{x:.17g}" for x in e.information[iu])
            f.write(f"EDGE {e.s} {e.t} {format_pose_matrix(e.measurement)} "
                    f"{info} {1 if e.uncertain else 0}\n")
