"""
Pose-graph optimization with a line process that rejects a bad loop closure.

A chain of relative-pose measurements fixes a trajectory up to noise; loop
closures add redundancy but can be wrong (a misregistered fragment pair).
Certain edges (odometry) are trusted unconditionally. Uncertain edges carry a
latent weight l = (mu / (mu + r'Wr))^2 that the optimizer re-estimates in
closed form each sweep, so a loop whose residual refuses to shrink is driven
toward zero weight and reported as pruned, leaving the consistent edges to
determine the solution.
"""

import numpy as np

from rgbd_recon.geometry import Pose, Twist, compose, inverse, se3_exp
from rgbd_recon.pose_graph import Edge, OptimizeParams, PoseGraph, optimize

rng = np.random.default_rng(4)
n = 8

# ground-truth trajectory: a meandering chain of modest steps
truth = [Pose.identity()]
for _ in range(n - 1):
    step = se3_exp(Twist(rng.uniform(-0.2, 0.2, 3), rng.uniform(-0.4, 0.4, 3)))
    truth.append(compose(truth[-1], step))

edges = [Edge(i, i + 1, compose(inverse(truth[i]), truth[i + 1]), np.eye(6))
         for i in range(n - 1)]

# one consistent loop closure and one that is wrong by a full meter
good_loop = compose(inverse(truth[0]), truth[n - 1])
edges.append(Edge(0, n - 1, good_loop, 10.0 * np.eye(6), uncertain=True))
bad_loop = compose(compose(inverse(truth[2]), truth[n - 1]),
                   Pose(np.eye(3), [1.0, 0.0, 0.0]))
edges.append(Edge(2, n - 1, bad_loop, 100.0 * np.eye(6), uncertain=True))

# start from poses shaken off the truth
shaken = [truth[0]] + [
    compose(p, se3_exp(Twist(rng.uniform(-0.03, 0.03, 3), rng.uniform(-0.03, 0.03, 3))))
    for p in truth[1:]
]
result = optimize(PoseGraph(shaken, edges), OptimizeParams())

print(f"converged={result.converged} after {result.iterations} iterations, "
      f"objective {result.objective:.3e}")
print(f"line weights (uncertain edges): good loop {result.line_weights[-2]:.4f}, "
      f"bad loop {result.line_weights[-1]:.6f}")
print(f"pruned edge indices: {list(result.pruned_edges)}")

worst = max(
    np.linalg.norm(compose(inverse(a), b).translation)
    for a, b in zip(result.graph.nodes, truth)
)
print(f"worst node translation error after optimization: {worst * 1000:.4f} mm")
