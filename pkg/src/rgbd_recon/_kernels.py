"""Compiled per-pixel loops for dense odometry and pose-graph residuals.

Kept in a real module (not generated code) so numba's on-disk cache works.
No fastmath: results must be bit-reproducible across runs.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def se3_log_rt(R, t, small_angle, pi_margin):
    """Principal-branch SE(3) log of (R, t) as (6-vector, near_pi flag).

    The caller turns the flag into an exception; compiled code cannot.
    """
    out = np.zeros(6)
    s0 = 0.5 * (R[2, 1] - R[1, 2])
    s1 = 0.5 * (R[0, 2] - R[2, 0])
    s2 = 0.5 * (R[1, 0] - R[0, 1])
    sin_theta = math.sqrt(s0 * s0 + s1 * s1 + s2 * s2)
    cos_theta = (R[0, 0] + R[1, 1] + R[2, 2] - 1.0) * 0.5
    if cos_theta > 1.0:
        cos_theta = 1.0
    elif cos_theta < -1.0:
        cos_theta = -1.0
    theta = math.atan2(sin_theta, cos_theta)
    if theta >= math.pi - pi_margin:
        return out, True
    if theta < small_angle:
        w0, w1, w2 = s0, s1, s2   # theta/sin(theta) -> 1
        d = 1.0 / 12.0 + theta * theta / 720.0
    else:
        k = theta / sin_theta
        w0, w1, w2 = s0 * k, s1 * k, s2 * k
        half = 0.5 * theta
        d = (1.0 - half * math.cos(half) / math.sin(half)) / (theta * theta)
    # V^-1 = I - 0.5 [w]x + d [w]x^2, applied to t
    ww0 = w1 * w1 + w2 * w2
    ww1 = w0 * w0 + w2 * w2
    ww2 = w0 * w0 + w1 * w1
    v0 = ((1.0 - d * ww0) * t[0]
          + (0.5 * w2 + d * w0 * w1) * t[1]
          + (-0.5 * w1 + d * w0 * w2) * t[2])
    v1 = ((-0.5 * w2 + d * w0 * w1) * t[0]
          + (1.0 - d * ww1) * t[1]
          + (0.5 * w0 + d * w1 * w2) * t[2])
    v2 = ((0.5 * w1 + d * w0 * w2) * t[0]
          + (-0.5 * w0 + d * w1 * w2) * t[1]
          + (1.0 - d * ww2) * t[2])
    out[0] = w0
    out[1] = w1
    out[2] = w2
    out[3] = v0
    out[4] = v1
    out[5] = v2
    return out, False


@njit(cache=True)
def chain_log(Rz, tz, Rs, ts, Rt, tt, small_angle, pi_margin):
    """log(Z^-1 Xs^-1 Xt) without intermediate allocations.

    The pose-graph residual; one fused kernel because it runs once per edge
    per evaluation.
    """
    Ra = np.empty((3, 3))
    ta = np.empty(3)
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc += Rs[k, i] * Rt[k, j]   # Rs^T Rt
            Ra[i, j] = acc
        acc = 0.0
        for k in range(3):
            acc += Rs[k, i] * (tt[k] - ts[k])
        ta[i] = acc
    Rb = np.empty((3, 3))
    tb = np.empty(3)
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc += Rz[k, i] * Ra[k, j]   # Rz^T (Rs^T Rt)
            Rb[i, j] = acc
        acc = 0.0
        for k in range(3):
            acc += Rz[k, i] * (ta[k] - tz[k])
        tb[i] = acc
    return se3_log_rt(Rb, tb, small_angle, pi_margin)


@njit(cache=True)
def warp_residuals(points, values, R, t, fx, fy, cx, cy, intensity_t, depth_t, use_depth):
    """Residuals and analytic Jacobians for one linearization point.

    points/values: back-projected source pixels and their intensities.
    R, t: current source-to-target transform.
    Returns per-pixel photometric and depth residual rows, the warped pixel
    coordinates, and a validity mask. Jacobians are with respect to a left
    increment exp(delta) applied to (R, t), twist ordered (omega, v). The
    image terms differentiate the bilinear interpolant exactly.
    """
    n = points.shape[0]
    H, W = intensity_t.shape
    r_p = np.zeros(n)
    J_p = np.zeros((n, 6))
    r_d = np.zeros(n)
    J_d = np.zeros((n, 6))
    uv = np.zeros((n, 2))
    valid = np.zeros(n, np.bool_)

    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        X = R[0, 0] * px + R[0, 1] * py + R[0, 2] * pz + t[0]
        Y = R[1, 0] * px + R[1, 1] * py + R[1, 2] * pz + t[1]
        Z = R[2, 0] * px + R[2, 1] * py + R[2, 2] * pz + t[2]
        if Z <= 1e-9:
            continue
        u = fx * X / Z + cx
        v = fy * Y / Z + cy
        i0 = int(np.floor(u))
        j0 = int(np.floor(v))
        if i0 < 0 or j0 < 0 or i0 + 1 > W - 1 or j0 + 1 > H - 1:
            continue
        z00 = depth_t[j0, i0]
        z01 = depth_t[j0, i0 + 1]
        z10 = depth_t[j0 + 1, i0]
        z11 = depth_t[j0 + 1, i0 + 1]
        if z00 <= 0.0 or z01 <= 0.0 or z10 <= 0.0 or z11 <= 0.0:
            continue
        a = u - i0
        b = v - j0
        w00 = (1.0 - a) * (1.0 - b)
        w01 = a * (1.0 - b)
        w10 = (1.0 - a) * b
        w11 = a * b

        i00 = intensity_t[j0, i0]
        i01 = intensity_t[j0, i0 + 1]
        i10 = intensity_t[j0 + 1, i0]
        i11 = intensity_t[j0 + 1, i0 + 1]
        warped = w00 * i00 + w01 * i01 + w10 * i10 + w11 * i11
        dIdu = (1.0 - b) * (i01 - i00) + b * (i11 - i10)
        dIdv = (1.0 - a) * (i10 - i00) + a * (i11 - i01)

        iz = 1.0 / Z
        du_dX = fx * iz
        du_dZ = -fx * X * iz * iz
        dv_dY = fy * iz
        dv_dZ = -fy * Y * iz * iz

        gx = dIdu * du_dX
        gy = dIdv * dv_dY
        gz = dIdu * du_dZ + dIdv * dv_dZ

        r_p[i] = values[i] - warped
        J_p[i, 0] = -(Y * gz - Z * gy)
        J_p[i, 1] = -(Z * gx - X * gz)
        J_p[i, 2] = -(X * gy - Y * gx)
        J_p[i, 3] = -gx
        J_p[i, 4] = -gy
        J_p[i, 5] = -gz

        if use_depth:
            zt = w00 * z00 + w01 * z01 + w10 * z10 + w11 * z11
            dZdu = (1.0 - b) * (z01 - z00) + b * (z11 - z10)
            dZdv = (1.0 - a) * (z10 - z00) + a * (z11 - z01)
            hx = dZdu * du_dX
            hy = dZdv * dv_dY
            hz = dZdu * du_dZ + dZdv * dv_dZ
            ex = -hx
            ey = -hy
            ez = 1.0 - hz
            r_d[i] = Z - zt
            J_d[i, 0] = Y * ez - Z * ey
            J_d[i, 1] = Z * ex - X * ez
            J_d[i, 2] = X * ey - Y * ex
            J_d[i, 3] = ex
            J_d[i, 4] = ey
            J_d[i, 5] = ez

        uv[i, 0] = u
        uv[i, 1] = v
        valid[i] = True

    return r_p, J_p, r_d, J_d, uv, valid


@njit(cache=True)
def reduce_normal_equations(r_p, J_p, r_d, J_d, valid, use_depth,
                            depth_weight, huber_delta):
    """Huber-weighted normal equations accumulated over the valid rows.

    Returns (count, objective_sum, squared_residual_sum, H, g); the objective
    includes the quadratic depth term when enabled.
    """
    n = 0
    obj = 0.0
    r2 = 0.0
    H = np.zeros((6, 6))
    g = np.zeros(6)
    for i in range(valid.size):
        if not valid[i]:
            continue
        n += 1
        r = r_p[i]
        a = abs(r)
        if a <= huber_delta:
            w = 1.0
            obj += 0.5 * r * r
        else:
            w = huber_delta / a
            obj += huber_delta * (a - 0.5 * huber_delta)
        r2 += r * r
        for j in range(6):
            wj = w * J_p[i, j]
            g[j] += wj * r
            for k in range(j, 6):
                H[j, k] += wj * J_p[i, k]
        if use_depth:
            rd = r_d[i]
            obj += 0.5 * depth_weight * rd * rd
            for j in range(6):
                dj = depth_weight * J_d[i, j]
                g[j] += dj * rd
                for k in range(j, 6):
                    H[j, k] += dj * J_d[i, k]
    for j in range(6):
        for k in range(j):
            H[j, k] = H[k, j]
    return n, obj, r2, H, g
