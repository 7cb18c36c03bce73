"""Rigid-body math on SE(3).

Poses are stored as an explicit rotation matrix plus translation vector.
Twists use the (omega, v) ordering: rotational coordinates first, then
translational. The exponential map follows the closed form

    R = I + a [w]x + b [w]x^2          (Rodrigues)
    t = V v,   V = I + b [w]x + c [w]x^2

with a = sin(th)/th, b = (1-cos th)/th^2, c = (th - sin th)/th^3.

Convention used throughout the pipeline: a relative pose between a source
frame s and a target frame t maps target-frame coordinates into the source
frame (p_s = T_st * p_t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import se3_log_rt
from .errors import AngleNearPi

# Below this rotation angle, series expansions replace the closed forms.
SMALL_ANGLE = 1e-8

# log() refuses angles this close to pi, where the branch is ill-conditioned.
PI_MARGIN = 1e-6


def skew(w: np.ndarray) -> np.ndarray:
    """3x3 cross-product matrix of a 3-vector."""
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


@dataclass(frozen=True)
class Twist:
    """Lie-algebra coordinates of a rigid motion: rotation omega (rad), translation v (m)."""

    omega: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", _as_readonly_vec3(self.omega))
        object.__setattr__(self, "v", _as_readonly_vec3(self.v))

    @staticmethod
    def from_vector(xi: np.ndarray) -> "Twist":
        xi = np.asarray(xi, dtype=np.float64).reshape(6)
        return Twist(xi[:3], xi[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.omega, self.v])


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation (3x3 orthonormal, det +1) and translation (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        R = np.ascontiguousarray(R)
        R.flags.writeable = False
        t = np.ascontiguousarray(t)
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=np.float64)
        if T.shape != (4, 4):
            raise ValueError(f"expected 4x4 homogeneous matrix, got {T.shape}")
        return Pose(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def check(self, atol: float = 1e-9) -> "Pose":
        """Raise ValueError unless the rotation is orthonormal with det +1."""
        R = self.rotation
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(self.translation)):
            raise ValueError("pose contains non-finite entries")
        err = np.max(np.abs(R.T @ R - np.eye(3)))
        if err > atol:
            raise ValueError(f"rotation not orthonormal: max |R^T R - I| = {err:.3e}")
        det = np.linalg.det(R)
        if abs(det - 1.0) > atol:
            raise ValueError(f"rotation determinant {det!r} differs from 1")
        return self

    def renormalized(self) -> "Pose":
        """Project the rotation onto SO(3); use after long composition chains."""
        u, _, vt = np.linalg.svd(self.rotation)
        R = u @ vt
        if np.linalg.det(R) < 0:
            u[:, -1] = -u[:, -1]
            R = u @ vt
        return Pose(R, self.translation)


def _as_readonly_vec3(x) -> np.ndarray:
    v = np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(3))
    v.flags.writeable = False
    return v


def _exp_coeffs(theta: float) -> tuple[float, float, float]:
    """(a, b, c) for Rodrigues and the V-matrix; stable at small angles."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    a = math.sin(theta) / theta
    # 1 - cos(th) = 2 sin^2(th/2), free of cancellation
    half_sinc = math.sin(0.5 * theta) / (0.5 * theta)
    b = 0.5 * half_sinc * half_sinc
    c = (theta - math.sin(theta)) / (theta * theta * theta)
    return a, b, c


def se3_exp(xi: Twist) -> Pose:
    """Closed-form exponential map from a twist to a pose."""
    w = xi.omega
    v = xi.v
    theta = float(np.linalg.norm(w))
    a, b, c = _exp_coeffs(theta)
    W = skew(w)
    W2 = W @ W
    R = np.eye(3) + a * W + b * W2
    V = np.eye(3) + b * W + c * W2
    return Pose(R, V @ v)


def _log_d_coeff(theta: float) -> float:
    """Coefficient of [w]x^2 in V^{-1}: (1 - (th/2) cot(th/2)) / th^2."""
    if theta < SMALL_ANGLE:
        return 1.0 / 12.0 + theta * theta / 720.0
    half = 0.5 * theta
    return (1.0 - half * math.cos(half) / math.sin(half)) / (theta * theta)


def log_rt(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """se3_log on bare rotation/translation arrays, as a plain 6-vector.

    The allocation-light form the pose graph assembles residuals with.
    """
    v, near_pi = se3_log_rt(R, t, SMALL_ANGLE, PI_MARGIN)
    if near_pi:
        raise AngleNearPi(f"rotation angle within {PI_MARGIN} of pi")
    return v


def se3_log(T: Pose) -> Twist:
    """Principal-branch logarithm; raises AngleNearPi within 1e-6 of pi."""
    v = log_rt(T.rotation, T.translation)
    return Twist(v[:3], v[3:])


def compose(a: Pose, b: Pose) -> Pose:
    """Pose product: (a . b) applies b first, then a."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(a: Pose) -> Pose:
    Rt = a.rotation.T
    return Pose(Rt, -(Rt @ a.translation))


def apply(a: Pose, p: np.ndarray) -> np.ndarray:
    """Rotate then translate a point; accepts shape (3,) or (N, 3)."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        return a.rotation @ p + a.translation
    return p @ a.rotation.T + a.translation


def adjoint(T: Pose) -> np.ndarray:
    """6x6 adjoint in (omega, v) ordering: Adj(T) xi = log(T exp(xi) T^-1)."""
    R = T.rotation
    A = np.zeros((6, 6))
    A[:3, :3] = R
    A[3:, :3] = skew(T.translation) @ R
    A[3:, 3:] = R
    return A


def _so3_left_jacobian_inverse(w: np.ndarray, theta: float) -> np.ndarray:
    W = skew(w)
    return np.eye(3) - 0.5 * W + _log_d_coeff(theta) * (W @ W)


def _se3_q_matrix(w: np.ndarray, v: np.ndarray, theta: float) -> np.ndarray:
    """Translation-rotation coupling block of the SE(3) left Jacobian."""
    W = skew(w)
    P = skew(v)
    WP = W @ P
    PW = P @ W
    WPW = WP @ W
    if theta < 1e-3:
        t2 = theta * theta
        c1 = 1.0 / 6.0 - t2 / 120.0
        c2 = 1.0 / 24.0 - t2 / 720.0
        c4 = -1.0 / 120.0 + t2 / 5040.0  # (th - sin th - th^3/6)/th^5
    else:
        t2 = theta * theta
        t3 = t2 * theta
        c1 = (theta - math.sin(theta)) / t3
        c2 = (1.0 - 0.5 * t2 - math.cos(theta)) / (t2 * t2)
        c4 = (theta - math.sin(theta) - t3 / 6.0) / (t2 * t3)
    c3 = -0.5 * (c2 - 3.0 * c4)
    Q = 0.5 * P
    Q += c1 * (WP + PW + WPW)
    Q -= c2 * (W @ WP + PW @ W - 3.0 * WPW)
    Q += c3 * (WPW @ W + W @ WPW)
    return Q


def se3_left_jacobian_inverse(xi: Twist) -> np.ndarray:
    """Inverse left Jacobian: log(exp(eta) exp(xi)) ~ xi + Jl_inv(xi) eta.

    Block lower-triangular in the (omega, v) ordering.
    """
    w = xi.omega
    theta = float(np.linalg.norm(w))
    A = _so3_left_jacobian_inverse(w, theta)
    Q = _se3_q_matrix(w, xi.v, theta)
    J = np.zeros((6, 6))
    J[:3, :3] = A
    J[3:, 3:] = A
    J[3:, :3] = -A @ Q @ A
    return J


def se3_right_jacobian_inverse(xi: Twist) -> np.ndarray:
    """Inverse right Jacobian: log(exp(xi) exp(delta)) ~ xi + Jr_inv(xi) delta."""
    return se3_left_jacobian_inverse(Twist(-xi.omega, -xi.v))


def format_pose_matrix(T: Pose) -> str:
    """Row-major 4x4 serialization, 17 significant digits, exact 0 0 0 1 bottom row."""
    M = T.matrix()
    vals = [f"{M[i, j]:.17g}" for i in range(3) for j in range(4)]
    return " ".join(vals) + " 0 0 0 1"
