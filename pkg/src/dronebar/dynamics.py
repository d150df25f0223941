"""Planar Lagrangian model of two drones carrying a bar on two cables.

Generalized coordinates are ``q = [y, z, th1, th2, th3]``: the left drone
position, the two rope angles from vertical and the bar angle from
horizontal. The right drone closes the kinematic chain. Equations of motion::

    M(q) qdd + C(q, qd) qd + G(q) = Q(q, u) + Q_dist

All functions broadcast over leading axes: ``q`` may be ``(5,)`` or
``(..., 5)``. Wrenches are arrays ``u = [u1, u2, u3, u4]`` with
``u1 = f1 sin(phi1)``, ``u2 = f1 cos(phi1)``, ``u3 = f2 sin(phi2)``,
``u4 = f2 cos(phi2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainFault, DynamicsFault

HALF_PI = 0.5 * np.pi
POINTS = ("drone1", "drone2", "bar_mid")


@dataclass(frozen=True)
class PhysicalParams:
    """Masses (kg), lengths (m) and gravity (m/s^2). Defaults are the testbed values."""

    m1: float = 1.5
    m2: float = 1.5
    m3: float = 0.3
    l1: float = 0.9
    l2: float = 0.9
    a: float = 1.2
    g: float = 9.8

    def __post_init__(self):
        for name in ("m1", "m2", "m3", "l1", "l2", "a", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"PhysicalParams.{name} must be strictly positive")

    @property
    def total_mass(self) -> float:
        return self.m1 + self.m2 + self.m3

    @property
    def equal_ropes(self) -> bool:
        return self.l1 == self.l2

    def hover_wrench(self) -> np.ndarray:
        """Wrench that balances gravity with level bar and vertical ropes."""
        g = self.g
        return np.array([0.0, (self.m1 + 0.5 * self.m3) * g, 0.0, (self.m2 + 0.5 * self.m3) * g])


@dataclass
class GeneralizedState:
    q: np.ndarray
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(5))
    t: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qdot = np.asarray(self.qdot, dtype=float)
        if self.q.shape[-1] != 5 or self.qdot.shape != self.q.shape:
            raise ValueError("q and qdot must both have trailing dimension 5")

    @property
    def x(self) -> np.ndarray:
        """Flat ``[q, qdot]`` vector."""
        return np.concatenate([self.q, self.qdot], axis=-1)


class PlanarPositions(NamedTuple):
    xi1: np.ndarray
    xi2: np.ndarray
    xi3: np.ndarray


def _trig(q):
    th1, th2, th3 = q[..., 2], q[..., 3], q[..., 4]
    return np.sin(th1), np.cos(th1), np.sin(th2), np.cos(th2), np.sin(th3), np.cos(th3)


def angle_violation(q) -> np.ndarray:
    """Boolean mask (over leading axes) of states outside |th_i| < pi/2."""
    q = np.asarray(q, dtype=float)
    return np.any(np.abs(q[..., 2:5]) >= HALF_PI, axis=-1)


def check_domain(q) -> None:
    bad = angle_violation(q)
    if np.any(bad):
        raise DomainFault("swing/bar angle outside (-pi/2, pi/2)", state=np.array(q, copy=True))


def inertia_matrix(q, p: PhysicalParams) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    S1, C1, S2, C2, S3, C3 = _trig(q)
    th1, th2, th3 = q[..., 2], q[..., 3], q[..., 4]
    m2, m3, l1, l2, a = p.m2, p.m3, p.l1, p.l2, p.a
    mb = m2 + m3
    mh = m2 + 0.5 * m3

    M = np.zeros(q.shape[:-1] + (5, 5))
    M[..., 0, 0] = M[..., 1, 1] = p.total_mass
    M[..., 0, 2] = mb * l1 * C1
    M[..., 0, 3] = m2 * l2 * C2
    M[..., 0, 4] = -mh * a * S3
    M[..., 1, 2] = mb * l1 * S1
    M[..., 1, 3] = -m2 * l2 * S2
    M[..., 1, 4] = mh * a * C3
    M[..., 2, 2] = mb * l1**2
    M[..., 2, 3] = m2 * l1 * l2 * np.cos(th1 + th2)
    M[..., 2, 4] = mh * l1 * a * np.sin(th1 - th3)
    M[..., 3, 3] = m2 * l2**2
    M[..., 3, 4] = -m2 * l2 * a * np.sin(th2 + th3)
    M[..., 4, 4] = m2 * a**2 + m3 * (0.5 * a) ** 2
    iu = np.triu_indices(5, 1)
    M[..., iu[1], iu[0]] = M[..., iu[0], iu[1]]
    return M


def inertia_partials(q, p: PhysicalParams) -> np.ndarray:
    """Analytic ``dM/dq_k`` stacked as ``D[..., k, i, j]``. Only the angles appear in M."""
    q = np.asarray(q, dtype=float)
    S1, C1, S2, C2, S3, C3 = _trig(q)
    th1, th2, th3 = q[..., 2], q[..., 3], q[..., 4]
    m2, m3, l1, l2, a = p.m2, p.m3, p.l1, p.l2, p.a
    mb = m2 + m3
    mh = m2 + 0.5 * m3
    s12 = -m2 * l1 * l2 * np.sin(th1 + th2)
    c13 = mh * l1 * a * np.cos(th1 - th3)
    c23 = -m2 * l2 * a * np.cos(th2 + th3)

    D = np.zeros(q.shape[:-1] + (5, 5, 5))
    # d/dth1
    D[..., 2, 0, 2] = -mb * l1 * S1
    D[..., 2, 1, 2] = mb * l1 * C1
    D[..., 2, 2, 3] = s12
    D[..., 2, 2, 4] = c13
    # d/dth2
    D[..., 3, 0, 3] = -m2 * l2 * S2
    D[..., 3, 1, 3] = -m2 * l2 * C2
    D[..., 3, 2, 3] = s12
    D[..., 3, 3, 4] = c23
    # d/dth3
    D[..., 4, 0, 4] = -mh * a * C3
    D[..., 4, 1, 4] = -mh * a * S3
    D[..., 4, 2, 4] = -c13
    D[..., 4, 3, 4] = c23
    iu = np.triu_indices(5, 1)
    D[..., iu[1], iu[0]] = D[..., iu[0], iu[1]]
    return D


def coriolis_matrix(q, qdot, p: PhysicalParams) -> np.ndarray:
    """Coriolis/centrifugal matrix from Christoffel symbols of the first kind.

    ``C_ij = 1/2 sum_k (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i) qd_k``, which makes
    ``Mdot - 2C`` skew-symmetric.
    """
    D = inertia_partials(q, p)
    qd = np.asarray(qdot, dtype=float)
    Mdot = np.einsum("...kij,...k->...ij", D, qd)
    # sum_k dM_ik/dq_j qd_k  ->  D[j, i, k] qd_k
    B = np.einsum("...jik,...k->...ij", D, qd)
    # sum_k dM_jk/dq_i qd_k  ->  D[i, j, k] qd_k
    Bt = np.einsum("...ijk,...k->...ij", D, qd)
    return 0.5 * (Mdot + B - Bt)


def potential_energy(q, p: PhysicalParams) -> np.ndarray:
    """Total gravitational potential ``g (m1 z1 + m2 z2 + m3 z3)``."""
    xi = forward_kinematics(q, p)
    return p.g * (p.m1 * xi.xi1[..., 1] + p.m2 * xi.xi2[..., 1] + p.m3 * xi.xi3[..., 1])


def gravity_vector(q, p: PhysicalParams) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    S1, _, S2, _, _, C3 = _trig(q)
    g = p.g
    G = np.zeros(q.shape)
    G[..., 1] = p.total_mass * g
    G[..., 2] = (p.m2 + p.m3) * g * p.l1 * S1
    G[..., 3] = -p.m2 * g * p.l2 * S2
    G[..., 4] = (p.m2 + 0.5 * p.m3) * g * p.a * C3
    return G


def generalized_forces(q, u, p: PhysicalParams) -> np.ndarray:
    """Map the four thrust components to generalized forces."""
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    S1, C1, S2, C2, S3, C3 = _trig(q)
    u1, u2, u3, u4 = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
    return np.stack(
        [
            u1 + u3,
            u2 + u4,
            u3 * p.l1 * C1 + u4 * p.l1 * S1,
            u3 * p.l2 * C2 - u4 * p.l2 * S2,
            -u3 * p.a * S3 + u4 * p.a * C3,
        ],
        axis=-1,
    )


def forward_kinematics(q, p: PhysicalParams) -> PlanarPositions:
    q = np.asarray(q, dtype=float)
    S1, C1, S2, C2, S3, C3 = _trig(q)
    y, z = q[..., 0], q[..., 1]
    ya = y + p.l1 * S1
    za = z - p.l1 * C1
    xi1 = np.stack([y, z], axis=-1)
    xi2 = np.stack([ya + p.l2 * S2 + p.a * C3, za + p.l2 * C2 + p.a * S3], axis=-1)
    xi3 = np.stack([ya + 0.5 * p.a * C3, za + 0.5 * p.a * S3], axis=-1)
    return PlanarPositions(xi1, xi2, xi3)


def point_jacobian(q, point: str, p: PhysicalParams) -> np.ndarray:
    """Analytic ``d xi / d q`` of a named point, shape ``(..., 2, 5)``."""
    if point not in POINTS:
        raise ValueError(f"unknown point {point!r}; expected one of {POINTS}")
    q = np.asarray(q, dtype=float)
    S1, C1, S2, C2, S3, C3 = _trig(q)
    J = np.zeros(q.shape[:-1] + (2, 5))
    J[..., 0, 0] = 1.0
    J[..., 1, 1] = 1.0
    if point == "drone1":
        return J
    J[..., 0, 2] = p.l1 * C1
    J[..., 1, 2] = p.l1 * S1
    if point == "drone2":
        J[..., 0, 3] = p.l2 * C2
        J[..., 1, 3] = -p.l2 * S2
        J[..., 0, 4] = -p.a * S3
        J[..., 1, 4] = p.a * C3
    else:
        J[..., 0, 4] = -0.5 * p.a * S3
        J[..., 1, 4] = 0.5 * p.a * C3
    return J


def external_force_to_generalized(q, point: str, force, p: PhysicalParams) -> np.ndarray:
    """Generalized force ``J^T F`` of a planar force ``(Fy, Fz)`` applied at ``point``."""
    J = point_jacobian(q, point, p)
    return np.einsum("...ij,...i->...j", J, np.asarray(force, dtype=float))


def velocity_kinematics(q, qdot, p: PhysicalParams) -> np.ndarray:
    """Drone velocities ``[yd1, zd1, yd2, zd2]``."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qdot, dtype=float)
    S1, C1, S2, C2, S3, C3 = _trig(q)
    yd, zd, w1, w2, w3 = (qd[..., i] for i in range(5))
    yd2 = yd + p.l1 * C1 * w1 + p.l2 * C2 * w2 - p.a * S3 * w3
    zd2 = zd + p.l1 * S1 * w1 - p.l2 * S2 * w2 + p.a * C3 * w3
    return np.stack([yd, zd, yd2, zd2], axis=-1)


def bar_velocity(q, qdot, p: PhysicalParams) -> np.ndarray:
    """Velocity of the bar midpoint ``(yd3, zd3)``."""
    J = point_jacobian(q, "bar_mid", p)
    return np.einsum("...ij,...j->...i", J, np.asarray(qdot, dtype=float))


def forward_dynamics(q, qdot, u, p: PhysicalParams, disturbance_Q=None) -> np.ndarray:
    """Solve ``M qdd = Q(u) + Q_dist - C qd - G`` for the generalized accelerations."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qdot, dtype=float)
    check_domain(q)
    rhs = generalized_forces(q, u, p) - gravity_vector(q, p)
    rhs = rhs - np.einsum("...ij,...j->...i", coriolis_matrix(q, qd, p), qd)
    if disturbance_Q is not None:
        rhs = rhs + disturbance_Q
    M = inertia_matrix(q, p)
    try:
        return np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise DynamicsFault(f"singular inertia matrix: {exc}", state=q.copy()) from exc


def kinetic_energy(q, qdot, p: PhysicalParams) -> np.ndarray:
    qd = np.asarray(qdot, dtype=float)
    return 0.5 * np.einsum("...i,...ij,...j->...", qd, inertia_matrix(q, p), qd)


def swing_potential(q, p: PhysicalParams) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return p.m3 * p.g * 0.5 * (p.l1 * (1 - np.cos(q[..., 2])) + p.l2 * (1 - np.cos(q[..., 3])))


def storage_energy(q, qdot, p: PhysicalParams) -> np.ndarray:
    """Kinetic energy plus the bar's rope-swing potential (not total mechanical energy)."""
    return kinetic_energy(q, qdot, p) + swing_potential(q, p)


def storage_power(q, qdot, u, p: PhysicalParams) -> np.ndarray:
    """Rate of change of :func:`storage_energy` predicted from drone velocities and thrust.

    ``yd1 u1 + yd2 u3 + zd1 (u2 - (m1 + m3/2) g) + zd2 (u4 - (m2 + m3/2) g)``;
    any external disturbance power must be added by the caller.
    """
    v = velocity_kinematics(q, qdot, p)
    u = np.asarray(u, dtype=float)
    g = p.g
    return (
        v[..., 0] * u[..., 0]
        + v[..., 2] * u[..., 2]
        + v[..., 1] * (u[..., 1] - (p.m1 + 0.5 * p.m3) * g)
        + v[..., 3] * (u[..., 3] - (p.m2 + 0.5 * p.m3) * g)
    )
