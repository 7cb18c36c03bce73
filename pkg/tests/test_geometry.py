"""SE(3) math: closed-form examples computed by hand, plus round-trip properties."""

import math

import numpy as np
import pytest

from rgbd_recon.errors import AngleNearPi
from rgbd_recon.geometry import (
    Pose,
    Twist,
    adjoint,
    apply,
    compose,
    inverse,
    se3_exp,
    se3_left_jacobian_inverse,
    se3_log,
    skew,
)


def random_twist(rng, max_angle=math.pi - 0.05, max_trans=5.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    v = rng.uniform(-max_trans, max_trans, size=3)
    return Twist(angle * axis, v)


class TestExp:
    def test_zero_twist_is_identity(self):
        T = se3_exp(Twist(np.zeros(3), np.zeros(3)))
        np.testing.assert_allclose(T.rotation, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(T.translation, np.zeros(3), atol=1e-15)

    def test_quarter_turn_about_z(self):
        # Rodrigues by hand for w = (0, 0, pi/2):
        #   R = I + sin(th) [e_z]x + (1 - cos th) [e_z]x^2
        #     = [[0, -1, 0], [1, 0, 0], [0, 0, 1]]
        T = se3_exp(Twist([0.0, 0.0, math.pi / 2], np.zeros(3)))
        expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(T.rotation, expected, atol=1e-15)
        np.testing.assert_allclose(T.rotation @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(T.translation, np.zeros(3), atol=1e-15)

    def test_pure_translation(self):
        T = se3_exp(Twist(np.zeros(3), [1.0, 2.0, 3.0]))
        np.testing.assert_allclose(T.rotation, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(T.translation, [1.0, 2.0, 3.0], atol=1e-15)

    def test_result_is_valid_pose(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            se3_exp(random_twist(rng)).check(atol=1e-12)


class TestLog:
    def test_identity_gives_zero(self):
        xi = se3_log(Pose.identity())
        np.testing.assert_allclose(xi.as_vector(), np.zeros(6), atol=1e-15)

    def test_round_trip_fixed_twist(self):
        xi = Twist([0.1, 0.2, 0.3], [0.4, 0.5, 0.6])
        back = se3_log(se3_exp(xi))
        np.testing.assert_allclose(back.as_vector(), xi.as_vector(), atol=1e-9)

    def test_angle_pi_raises(self):
        # Rotation by exactly pi about x: diag(1, -1, -1).
        R = np.diag([1.0, -1.0, -1.0])
        with pytest.raises(AngleNearPi):
            se3_log(Pose(R, np.zeros(3)))

    def test_round_trip_property(self):
        # >= 1000 random twists with |omega| < pi
        rng = np.random.default_rng(1234)
        for _ in range(1000):
            xi = random_twist(rng)
            back = se3_log(se3_exp(xi))
            np.testing.assert_allclose(back.as_vector(), xi.as_vector(), atol=1e-8)

    def test_round_trip_tiny_angles(self):
        rng = np.random.default_rng(99)
        for scale in (1e-12, 1e-9, 1e-7, 1e-4):
            for _ in range(50):
                xi = Twist(rng.normal(size=3) * scale, rng.normal(size=3))
                back = se3_log(se3_exp(xi))
                np.testing.assert_allclose(back.as_vector(), xi.as_vector(), atol=1e-9)

    def test_exp_log_matrix_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            T = se3_exp(random_twist(rng))
            T2 = se3_exp(se3_log(T))
            np.testing.assert_allclose(T2.matrix(), T.matrix(), atol=1e-9)


class TestGroupOps:
    def test_compose_identity(self):
        b = se3_exp(Twist([0.3, -0.1, 0.2], [1.0, -2.0, 0.5]))
        c = compose(Pose.identity(), b)
        np.testing.assert_allclose(c.matrix(), b.matrix(), atol=1e-15)

    def test_apply_translation(self):
        T = Pose(np.eye(3), [0.0, 0.0, 1.0])
        np.testing.assert_allclose(apply(T, [0.0, 0.0, 0.0]), [0.0, 0.0, 1.0])

    def test_compose_two_quarter_turns(self):
        # Hand product: Rz(90) Rz(90) = Rz(180) = [[-1,0,0],[0,-1,0],[0,0,1]]
        q = se3_exp(Twist([0.0, 0.0, math.pi / 2], np.zeros(3)))
        half = compose(q, q)
        expected = np.array([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(half.rotation, expected, atol=1e-9)

    def test_compose_inverse_is_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            a = se3_exp(random_twist(rng))
            e = compose(a, inverse(a))
            np.testing.assert_allclose(e.matrix(), np.eye(4), atol=1e-9)

    def test_compose_associative(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            a, b, c = (se3_exp(random_twist(rng)) for _ in range(3))
            left = compose(compose(a, b), c)
            right = compose(a, compose(b, c))
            np.testing.assert_allclose(left.matrix(), right.matrix(), atol=1e-9)

    def test_apply_homomorphism(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            a = se3_exp(random_twist(rng))
            b = se3_exp(random_twist(rng))
            p = rng.uniform(-3, 3, size=3)
            np.testing.assert_allclose(
                apply(compose(a, b), p), apply(a, apply(b, p)), atol=1e-9
            )

    def test_apply_batched(self):
        a = se3_exp(Twist([0.1, 0.2, -0.3], [1.0, 0.0, 2.0]))
        pts = np.random.default_rng(3).uniform(-1, 1, size=(40, 3))
        batched = apply(a, pts)
        for i in range(len(pts)):
            np.testing.assert_allclose(batched[i], apply(a, pts[i]), atol=1e-12)


class TestPoseValidation:
    def test_check_rejects_sheared_matrix(self):
        R = np.eye(3)
        R = R + 1e-6
        with pytest.raises(ValueError):
            Pose(R, np.zeros(3)).check()

    def test_check_rejects_reflection(self):
        with pytest.raises(ValueError):
            Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3)).check()

    def test_renormalized_repairs_drift(self):
        rng = np.random.default_rng(31)
        T = se3_exp(random_twist(rng))
        drifted = Pose(T.rotation + 1e-7 * rng.normal(size=(3, 3)), T.translation)
        fixed = drifted.renormalized()
        fixed.check(atol=1e-12)

    def test_matrix_round_trip(self):
        T = se3_exp(Twist([0.2, -0.4, 0.1], [3.0, 2.0, 1.0]))
        np.testing.assert_allclose(Pose.from_matrix(T.matrix()).matrix(), T.matrix())


class TestJacobians:
    """The pose-graph optimizer relies on these; verify against finite differences."""

    def test_adjoint_definition(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            T = se3_exp(random_twist(rng, max_angle=2.0))
            xi = random_twist(rng, max_angle=0.5, max_trans=0.5)
            lhs = compose(compose(T, se3_exp(xi)), inverse(T))
            rhs = se3_exp(Twist.from_vector(adjoint(T) @ xi.as_vector()))
            np.testing.assert_allclose(lhs.matrix(), rhs.matrix(), atol=1e-9)

    def test_left_jacobian_inverse_fd(self):
        # log(exp(eta) exp(xi)) ~ xi + Jl_inv(xi) eta
        rng = np.random.default_rng(43)
        eps = 1e-7
        for _ in range(30):
            xi = random_twist(rng, max_angle=2.5, max_trans=2.0)
            T = se3_exp(xi)
            J = se3_left_jacobian_inverse(xi)
            J_fd = np.zeros((6, 6))
            for k in range(6):
                e = np.zeros(6)
                e[k] = eps
                plus = se3_log(compose(se3_exp(Twist.from_vector(e)), T)).as_vector()
                minus = se3_log(compose(se3_exp(Twist.from_vector(-e)), T)).as_vector()
                J_fd[:, k] = (plus - minus) / (2 * eps)
            np.testing.assert_allclose(J, J_fd, atol=1e-5)

    def test_left_jacobian_inverse_small_angle(self):
        rng = np.random.default_rng(47)
        eps = 1e-7
        for scale in (1e-6, 1e-4):
            xi = Twist(rng.normal(size=3) * scale, rng.normal(size=3))
            T = se3_exp(xi)
            J = se3_left_jacobian_inverse(xi)
            J_fd = np.zeros((6, 6))
            for k in range(6):
                e = np.zeros(6)
                e[k] = eps
                plus = se3_log(compose(se3_exp(Twist.from_vector(e)), T)).as_vector()
                minus = se3_log(compose(se3_exp(Twist.from_vector(-e)), T)).as_vector()
                J_fd[:, k] = (plus - minus) / (2 * eps)
            np.testing.assert_allclose(J, J_fd, atol=1e-5)


def test_skew_matches_cross_product():
    rng = np.random.default_rng(53)
    for _ in range(20):
        a, b = rng.normal(size=3), rng.normal(size=3)
        np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-15)


def test_format_pose_matrix_bottom_row():
    from rgbd_recon.geometry import format_pose_matrix

    T = se3_exp(Twist([0.1, 0.2, 0.3], [1.5, -2.5, 0.25]))
    line = format_pose_matrix(T)
    parts = line.split()
    assert len(parts) == 16
    assert parts[12:] == ["0", "0", "0", "1"]
    M = np.array([float(x) for x in parts]).reshape(4, 4)
    np.testing.assert_allclose(M, T.matrix(), rtol=0, atol=1e-16)
