"""Compiled scalar kernels for the closed-loop integrator.

These mirror the broadcasting numpy functions in :mod:`dynamics` and
:mod:`control` one state at a time. The numpy versions are the reference and
the test suite checks the two against each other.

Packed layouts (all float64 arrays)::

    P   = [m1, m2, m3, l1, l2, a, g]
    GN  = [kp1, kp2, kp3, kp4, kd1, kd2, kd3, kd4, ka1, ka2, sigma, rho, theta2d]
    SP  = [y1d, z1d, y2d, z2d]
    DST = [kind, point, fy, fz, drag, wind]   kind 0: wind drag, 1: constant force

Status codes returned by the kernels are listed in ``STATUS``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OK, DOMAIN, BARRIER, ACTUATION, SINGULAR = 0, 1, 2, 3, 4
STATUS = {OK: "ok", DOMAIN: "domain", BARRIER: "barrier", ACTUATION: "actuation", SINGULAR: "dynamics"}
POINT_CODES = {"drone1": 0, "drone2": 1, "bar_mid": 2}

# record row layout used by run_loop
R_T = 0
R_Q = slice(1, 6)
R_QD = slice(6, 11)
R_U = slice(11, 15)
R_XI = slice(15, 21)
R_V, R_E, R_RES_POW, R_RES_LYA, R_DV, R_BAR, R_EY = 21, 22, 23, 24, 25, 26, 27
R_ERR = slice(28, 35)
R_SAT = 35
R_W_POW, R_D_POW, R_W_LYA, R_D_LYA = 36, 37, 38, 39
R_WIDTH = 40

_HALF_PI = 0.5 * math.pi
_ROUNDOFF = 1e-9


def pack_params(p) -> np.ndarray:
    return np.array([p.m1, p.m2, p.m3, p.l1, p.l2, p.a, p.g], dtype=np.float64)


def pack_gains(g) -> np.ndarray:
    return np.array(
        [g.kp1, g.kp2, g.kp3, g.kp4, g.kd1, g.kd2, g.kd3, g.kd4,
         g.ka1, g.ka2, g.sigma, g.rho, g.theta2d],
        dtype=np.float64,
    )


def pack_setpoint(s) -> np.ndarray:
    return np.array([s.y1d, s.z1d, s.y2d, s.z2d], dtype=np.float64)


@njit(cache=True)
def in_domain(q):
    return abs(q[2]) < _HALF_PI and abs(q[3]) < _HALF_PI and abs(q[4]) < _HALF_PI


@njit(cache=True)
def mass_matrix(q, P, M):
    m1, m2, m3, l1, l2, a = P[0], P[1], P[2], P[3], P[4], P[5]
    t1, t2, t3 = q[2], q[3], q[4]
    mb = m2 + m3
    mh = m2 + 0.5 * m3
    M[:, :] = 0.0
    M[0, 0] = m1 + m2 + m3
    M[1, 1] = m1 + m2 + m3
    M[0, 2] = mb * l1 * math.cos(t1)
    M[0, 3] = m2 * l2 * math.cos(t2)
    M[0, 4] = -mh * a * math.sin(t3)
    M[1, 2] = mb * l1 * math.sin(t1)
    M[1, 3] = -m2 * l2 * math.sin(t2)
    M[1, 4] = mh * a * math.cos(t3)
    M[2, 2] = mb * l1 * l1
    M[2, 3] = m2 * l1 * l2 * math.cos(t1 + t2)
    M[2, 4] = mh * l1 * a * math.sin(t1 - t3)
    M[3, 3] = m2 * l2 * l2
    M[3, 4] = -m2 * l2 * a * math.sin(t2 + t3)
    M[4, 4] = m2 * a * a + 0.25 * m3 * a * a
    for i in range(5):
        for j in range(i + 1, 5):
            M[j, i] = M[i, j]


@njit(cache=True)
def coriolis_times_qdot(q, qd, P, h):
    """``h = C(q, qd) qd = Mdot qd - 1/2 [qd^T dM/dq_i qd]_i``."""
    m2, m3, l1, l2, a = P[1], P[2], P[3], P[4], P[5]
    t1, t2, t3 = q[2], q[3], q[4]
    S1, C1 = math.sin(t1), math.cos(t1)
    S2, C2 = math.sin(t2), math.cos(t2)
    S3, C3 = math.sin(t3), math.cos(t3)
    mb = m2 + m3
    mh = m2 + 0.5 * m3
    s12 = -m2 * l1 * l2 * math.sin(t1 + t2)
    c13 = mh * l1 * a * math.cos(t1 - t3)
    c23 = -m2 * l2 * a * math.cos(t2 + t3)
    D = np.zeros((5, 5, 5))
    D[2, 0, 2] = -mb * l1 * S1
    D[2, 1, 2] = mb * l1 * C1
    D[2, 2, 3] = s12
    D[2, 2, 4] = c13
    D[3, 0, 3] = -m2 * l2 * S2
    D[3, 1, 3] = -m2 * l2 * C2
    D[3, 2, 3] = s12
    D[3, 3, 4] = c23
    D[4, 0, 4] = -mh * a * C3
    D[4, 1, 4] = -mh * a * S3
    D[4, 2, 4] = -c13
    D[4, 3, 4] = c23
    for k in range(2, 5):
        for i in range(5):
            for j in range(i + 1, 5):
                D[k, j, i] = D[k, i, j]
    for i in range(5):
        acc = 0.0
        for j in range(5):
            md = 0.0
            for k in range(2, 5):
                md += D[k, i, j] * qd[k]
            acc += md * qd[j]
        quad = 0.0
        for j in range(5):
            for k in range(5):
                quad += D[i, j, k] * qd[j] * qd[k]
        h[i] = acc - 0.5 * quad


@njit(cache=True)
def gravity(q, P, G):
    m1, m2, m3, l1, l2, a, g = P[0], P[1], P[2], P[3], P[4], P[5], P[6]
    G[0] = 0.0
    G[1] = (m1 + m2 + m3) * g
    G[2] = (m2 + m3) * g * l1 * math.sin(q[2])
    G[3] = -m2 * g * l2 * math.sin(q[3])
    G[4] = (m2 + 0.5 * m3) * g * a * math.cos(q[4])


@njit(cache=True)
def thrust_forces(q, u, P, Q):
    l1, l2, a = P[3], P[4], P[5]
    Q[0] = u[0] + u[2]
    Q[1] = u[1] + u[3]
    Q[2] = l1 * (u[2] * math.cos(q[2]) + u[3] * math.sin(q[2]))
    Q[3] = l2 * (u[2] * math.cos(q[3]) - u[3] * math.sin(q[3]))
    Q[4] = a * (-u[2] * math.sin(q[4]) + u[3] * math.cos(q[4]))


@njit(cache=True)
def add_point_force(q, point, fy, fz, P, Q):
    l1, l2, a = P[3], P[4], P[5]
    Q[0] += fy
    Q[1] += fz
    if point == 0:
        return
    Q[2] += l1 * (math.cos(q[2]) * fy + math.sin(q[2]) * fz)
    if point == 1:
        Q[3] += l2 * (math.cos(q[3]) * fy - math.sin(q[3]) * fz)
        Q[4] += a * (-math.sin(q[4]) * fy + math.cos(q[4]) * fz)
    else:
        Q[4] += 0.5 * a * (-math.sin(q[4]) * fy + math.cos(q[4]) * fz)


@njit(cache=True)
def disturbance_forces(q, qd, P, DST, active, Q):
    for i in range(5):
        Q[i] = 0.0
    for r in range(DST.shape[0]):
        if not active[r]:
            continue
        if DST[r, 0] == 0.0:
            yd3 = qd[0] + P[3] * math.cos(q[2]) * qd[2] - 0.5 * P[5] * math.sin(q[4]) * qd[4]
            add_point_force(q, 2, DST[r, 4] * (DST[r, 5] - yd3), 0.0, P, Q)
        else:
            add_point_force(q, int(DST[r, 1]), DST[r, 2], DST[r, 3], P, Q)


@njit(cache=True)
def spd_solve(M, b, x):
    """Cholesky solve of ``M x = b``; returns False if M is not numerically positive definite."""
    n = 5
    L = np.zeros((n, n))
    scale = 0.0
    for i in range(n):
        scale = max(scale, M[i, i])
    for j in range(n):
        s = M[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 1e-13 * scale:
            return False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    y = np.zeros(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return True


@njit(cache=True)
def drone_states(q, qd, P, out):
    """``out = [y1, z1, y2, z2, y3, z3, yd1, zd1, yd2, zd2]``."""
    l1, l2, a = P[3], P[4], P[5]
    S1, C1 = math.sin(q[2]), math.cos(q[2])
    S2, C2 = math.sin(q[3]), math.cos(q[3])
    S3, C3 = math.sin(q[4]), math.cos(q[4])
    ya = q[0] + l1 * S1
    za = q[1] - l1 * C1
    out[0] = q[0]
    out[1] = q[1]
    out[2] = ya + l2 * S2 + a * C3
    out[3] = za + l2 * C2 + a * S3
    out[4] = ya + 0.5 * a * C3
    out[5] = za + 0.5 * a * S3
    out[6] = qd[0]
    out[7] = qd[1]
    out[8] = qd[0] + l1 * C1 * qd[2] + l2 * C2 * qd[3] - a * S3 * qd[4]
    out[9] = qd[1] + l1 * S1 * qd[2] - l2 * S2 * qd[3] + a * C3 * qd[4]


@njit(cache=True)
def control(q, qd, SP, GN, P, fmax, u):
    """Write the wrench into ``u``; returns ``(status, saturated)``."""
    s = np.empty(10)
    drone_states(q, qd, P, s)
    m1, m2, m3, g = P[0], P[1], P[2], P[6]
    ey1 = s[0] - SP[0]
    ez1 = s[1] - SP[1]
    ey2 = s[2] - SP[2]
    ez2 = s[3] - SP[3]
    w2 = qd[2] * qd[2] + qd[3] * qd[3] + qd[4] * qd[4]
    bias = 0.5 * m3 * g * math.tan(GN[12])
    bar = 0.0
    if GN[10] != 0.0:
        ey = ey1 - ey2
        gap = GN[11] - ey * ey
        if gap <= 0.0:
            return BARRIER, False
        bar = GN[10] * GN[11] * ey / (gap * gap)
    u[0] = -GN[0] * ey1 - GN[4] * s[6] - GN[8] * w2 * s[6] - bias - bar
    u[2] = -GN[1] * ey2 - GN[5] * s[8] - GN[9] * w2 * s[8] + bias + bar
    u[1] = -GN[2] * ez1 - GN[6] * s[7] + (m1 + 0.5 * m3) * g
    u[3] = -GN[3] * ez2 - GN[7] * s[9] + (m2 + 0.5 * m3) * g
    if u[1] <= 0.0 or u[3] <= 0.0:
        return ACTUATION, False
    sat = False
    if fmax > 0.0:
        for i in (0, 2):
            f = math.hypot(u[i], u[i + 1])
            if f > fmax:
                u[i] *= fmax / f
                u[i + 1] *= fmax / f
                sat = True
    return OK, sat


@njit(cache=True)
def storage_energy(q, qd, P):
    M = np.empty((5, 5))
    mass_matrix(q, P, M)
    T = 0.0
    for i in range(5):
        for j in range(5):
            T += qd[i] * M[i, j] * qd[j]
    sw = 0.5 * P[2] * P[6] * (P[3] * (1.0 - math.cos(q[2])) + P[4] * (1.0 - math.cos(q[3])))
    return 0.5 * T + sw


@njit(cache=True)
def lyapunov(q, qd, SP, GN, P):
    """Returns ``(status, V)``."""
    s = np.empty(10)
    drone_states(q, qd, P, s)
    ey1 = s[0] - SP[0]
    ez1 = s[1] - SP[1]
    ey2 = s[2] - SP[2]
    ez2 = s[3] - SP[3]
    ey = ey1 - ey2
    V = storage_energy(q, qd, P)
    V += 0.5 * (GN[0] * ey1 * ey1 + GN[1] * ey2 * ey2 + GN[2] * ez1 * ez1 + GN[3] * ez2 * ez2)
    if GN[10] != 0.0:
        gap = GN[11] - ey * ey
        if gap <= 0.0:
            return BARRIER, math.nan
        V += GN[10] * ey * ey / (2.0 * gap)
    V += 0.5 * P[2] * P[6] * ey * math.tan(GN[12])
    return OK, V


@njit(cache=True)
def closed_loop_rhs(xa, SP, GN, P, DST, active, fmax, hold, uh, out):
    """Derivative of the augmented state ``[q, qd, E_in, V_pred]``; returns ``(status, sat)``."""
    q = xa[0:5]
    qd = xa[5:10]
    if not in_domain(q):
        return DOMAIN, False
    u = np.empty(4)
    sat = False
    if hold == 0:
        st, sat = control(q, qd, SP, GN, P, fmax, u)
        if st != OK:
            return st, False
    else:
        u[:] = uh
    M = np.empty((5, 5))
    h = np.empty(5)
    G = np.empty(5)
    Qu = np.empty(5)
    Qd = np.empty(5)
    mass_matrix(q, P, M)
    coriolis_times_qdot(q, qd, P, h)
    gravity(q, P, G)
    thrust_forces(q, u, P, Qu)
    disturbance_forces(q, qd, P, DST, active, Qd)
    rhs = Qu + Qd - h - G
    acc = np.empty(5)
    if not spd_solve(M, rhs, acc):
        return SINGULAR, False
    s = np.empty(10)
    drone_states(q, qd, P, s)
    g = P[6]
    ext = 0.0
    for i in range(5):
        ext += qd[i] * Qd[i]
    pE = (
        s[6] * u[0] + s[8] * u[2]
        + s[7] * (u[1] - (P[0] + 0.5 * P[2]) * g)
        + s[9] * (u[3] - (P[1] + 0.5 * P[2]) * g)
    )
    w2 = qd[2] * qd[2] + qd[3] * qd[3] + qd[4] * qd[4]
    pV = (
        -(GN[8] * w2 + GN[4]) * s[6] * s[6]
        - (GN[9] * w2 + GN[5]) * s[8] * s[8]
        - GN[6] * s[7] * s[7]
        - GN[7] * s[9] * s[9]
    )
    out[0:5] = qd
    out[5:10] = acc
    out[10] = pE + ext
    out[11] = pV + ext
    return OK, sat


@njit(cache=True)
def rk4_step(xa, dt, SP, GN, P, DST, active, fmax, hold, uh, xn):
    """One classical RK4 step of the augmented closed loop; returns ``(status, sat)``."""
    k1 = np.empty(12)
    k2 = np.empty(12)
    k3 = np.empty(12)
    k4 = np.empty(12)
    st, s1 = closed_loop_rhs(xa, SP, GN, P, DST, active, fmax, hold, uh, k1)
    if st != OK:
        return st, False
    st, s2 = closed_loop_rhs(xa + 0.5 * dt * k1, SP, GN, P, DST, active, fmax, hold, uh, k2)
    if st != OK:
        return st, False
    st, s3 = closed_loop_rhs(xa + 0.5 * dt * k2, SP, GN, P, DST, active, fmax, hold, uh, k3)
    if st != OK:
        return st, False
    st, s4 = closed_loop_rhs(xa + dt * k3, SP, GN, P, DST, active, fmax, hold, uh, k4)
    if st != OK:
        return st, False
    for i in range(12):
        xn[i] = xa[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return OK, s1 or s2 or s3 or s4


@njit(cache=True)
def _residual(diff, ref, scale):
    return abs(diff) / max(abs(ref), _ROUNDOFF * (1.0 + abs(scale)))


@njit(cache=True)
def _record(row, t, q, qd, u, SP, GN, P, th):
    """Fill the state-derived columns of a record row; returns status."""
    s = np.empty(10)
    drone_states(q, qd, P, s)
    row[R_T] = t
    row[1:6] = q
    row[6:11] = qd
    row[11:15] = u
    row[15:21] = s[0:6]
    st, V = lyapunov(q, qd, SP, GN, P)
    if st != OK:
        return st
    row[R_V] = V
    row[R_E] = storage_energy(q, qd, P)
    ey1 = s[0] - SP[0]
    ey2 = s[2] - SP[2]
    ey = ey1 - ey2
    row[R_EY] = ey
    if GN[10] != 0.0:
        gap = GN[11] - ey * ey
        row[R_BAR] = GN[10] * GN[11] * ey / (gap * gap)
    else:
        row[R_BAR] = 0.0
    row[28] = ey1
    row[29] = s[1] - SP[1]
    row[30] = ey2
    row[31] = s[3] - SP[3]
    row[32] = q[2] - th
    row[33] = q[3] - th
    row[34] = q[4]
    return OK


@njit(cache=True)
def run_loop(x0, t0, dt, n, seg, SPS, GNS, THS, P, DST, ACT, fmax, hold, decim, rec):
    """Integrate ``n`` steps, filling ``rec`` (``n + 1`` rows of width ``R_WIDTH``).

    ``seg[k]`` is the setpoint segment governing grid time ``t0 + k dt`` and
    ``ACT[k]`` the disturbance rows active over step ``k``. Returns
    ``(steps_done, status)``; a nonzero status with zero steps means the
    initial state itself was rejected.
    """
    x = np.zeros(12)
    x[0:10] = x0
    xn = np.empty(12)
    u = np.empty(4)
    uh = np.zeros(4)
    rec[:, :] = math.nan

    s0 = seg[0]
    if not in_domain(x[0:5]):
        return 0, DOMAIN
    st, sat = control(x[0:5], x[5:10], SPS[s0], GNS[s0], P, fmax, u)
    if st != OK:
        return 0, st
    st = _record(rec[0], t0, x[0:5], x[5:10], u, SPS[s0], GNS[s0], P, THS[s0])
    if st != OK:
        return 0, st
    rec[0, R_SAT] = 1.0 if sat else 0.0
    uh[:] = u

    for k in range(n):
        sk = seg[k]
        SP = SPS[sk]
        GN = GNS[sk]
        sat_hold = False
        if hold == 1 and k % decim == 0:
            st, sat_hold = control(x[0:5], x[5:10], SP, GN, P, fmax, uh)
            if st != OK:
                return k, st
        x[10] = 0.0
        x[11] = 0.0
        st, sat = rk4_step(x, dt, SP, GN, P, DST, ACT[k], fmax, hold, uh, xn)
        if st != OK:
            return k, st
        if not in_domain(xn[0:5]):
            return k, DOMAIN
        st, V0 = lyapunov(x[0:5], x[5:10], SP, GN, P)
        if st != OK:
            return k, st
        st, V1 = lyapunov(xn[0:5], xn[5:10], SP, GN, P)
        if st != OK:
            return k, st
        E0 = rec[k, R_E]
        E1 = storage_energy(xn[0:5], xn[5:10], P)

        sn = seg[k + 1]
        row = rec[k + 1]
        sat_rec = False
        if hold == 0 or (k + 1) % decim == 0:
            st, sat_rec = control(xn[0:5], xn[5:10], SPS[sn], GNS[sn], P, fmax, u)
            if st != OK:
                return k, st
        else:
            u[:] = uh
        st = _record(row, t0 + (k + 1) * dt, xn[0:5], xn[5:10], u, SPS[sn], GNS[sn], P, THS[sn])
        if st != OK:
            return k, st
        row[R_W_POW] = xn[10]
        row[R_D_POW] = (E1 - E0) - xn[10]
        row[R_W_LYA] = xn[11]
        row[R_D_LYA] = (V1 - V0) - xn[11]
        row[R_RES_POW] = _residual(row[R_D_POW], xn[10], E0)
        row[R_RES_LYA] = _residual(row[R_D_LYA], xn[11], V0)
        row[R_DV] = V1 - V0
        row[R_SAT] = 1.0 if (sat or sat_hold or sat_rec) else 0.0
        x[0:10] = xn[0:10]
    return n, OK


@njit(cache=True)
def converge(x0, dt, n_max, SP, GN, P, th_t, pos_tol, ang_tol, dwell_steps, fmax):
    """Run the undisturbed continuous closed loop until it stays in the goal box.

    Returns ``(status, step_entered, x_final)`` where ``step_entered`` is the
    step at which the final dwell began, or -1 if it never converged.
    """
    x = np.zeros(12)
    x[0:10] = x0
    xn = np.empty(12)
    DST = np.zeros((0, 6))
    active = np.zeros(0, dtype=np.bool_)
    uh = np.zeros(4)
    s = np.empty(10)
    since = -1
    for k in range(n_max + 1):
        drone_states(x[0:5], x[5:10], P, s)
        pos = max(abs(s[0] - SP[0]), abs(s[1] - SP[1]), abs(s[2] - SP[2]), abs(s[3] - SP[3]))
        ang = max(abs(x[2] - th_t), abs(x[3] - th_t), abs(x[4]))
        if pos < pos_tol and ang < ang_tol:
            if since < 0:
                since = k
            if k - since >= dwell_steps:
                return OK, since, x[0:10].copy()
        else:
            since = -1
        if k == n_max:
            break
        x[10] = 0.0
        x[11] = 0.0
        st, _ = rk4_step(x, dt, SP, GN, P, DST, active, fmax, 0, uh, xn)
        if st != OK:
            return st, -1, x[0:10].copy()
        if not in_domain(xn[0:5]):
            return DOMAIN, -1, xn[0:10].copy()
        x[:] = xn
    return OK, -1, x[0:10].copy()


@njit(cache=True)
def free_flight(x0, dt, n, P):
    """Unforced RK4 trajectory (``n + 1`` rows of ``[q, qd]``); returns ``(traj, status)``."""
    traj = np.full((n + 1, 10), math.nan)
    x = np.zeros(12)
    x[0:10] = x0
    xn = np.empty(12)
    SP = np.zeros(4)
    GN = np.ones(13)
    DST = np.zeros((0, 6))
    active = np.zeros(0, dtype=np.bool_)
    zero = np.zeros(4)
    traj[0] = x0
    for k in range(n):
        st, _ = rk4_step(x, dt, SP, GN, P, DST, active, -1.0, 1, zero, xn)
        if st != OK:
            return traj, st
        x[:] = xn
        traj[k + 1] = xn[0:10]
    return traj, OK
