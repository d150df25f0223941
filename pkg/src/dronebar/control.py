"""Cooperative outer-loop controller, PD baseline, and Lyapunov instrumentation.

The controller outputs the four horizontal/vertical thrust components directly.
Each drone's horizontal law has a PD part, a swing-coupled damping part
``ka * |thd|^2 * yd`` and an inter-drone barrier term acting on
``e_y = e_y1 - e_y2`` with a pole at ``e_y**2 = rho``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import dynamics as dyn
from .dynamics import PhysicalParams
from .errors import ActuationFault, BarrierDomainFault, ConfigurationFault

HALF_PI = 0.5 * np.pi


@dataclass(frozen=True)
class Gains:
    """Controller constants. Defaults are the tuned experimental gains."""

    kp1: float = 5.2
    kp2: float = 5.2
    kp3: float = 6.0
    kp4: float = 6.0
    kd1: float = 6.0
    kd2: float = 6.0
    kd3: float = 8.0
    kd4: float = 8.0
    ka1: float = 0.75
    ka2: float = 0.75
    sigma: float = 4.0
    rho: float = 2.0
    theta2d: float = 0.0

    def __post_init__(self):
        for name in ("kp1", "kp2", "kp3", "kp4", "kd1", "kd2", "kd3", "kd4", "rho"):
            if not getattr(self, name) > 0:
                raise ValueError(f"Gains.{name} must be strictly positive")
        # zero is allowed so the PD baseline is a special case of the same law
        for name in ("ka1", "ka2", "sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"Gains.{name} must be nonnegative")
        if not abs(self.theta2d) < HALF_PI:
            raise ValueError("Gains.theta2d must lie in (-pi/2, pi/2)")

    def as_pd(self) -> "Gains":
        return dataclasses.replace(self, ka1=0.0, ka2=0.0, sigma=0.0, theta2d=0.0)


@dataclass(frozen=True)
class Setpoint:
    """Desired drone positions (m)."""

    y1d: float
    z1d: float
    y2d: float
    z2d: float

    def check(self, p: PhysicalParams, theta2d: float = 0.0, tol: float = 1e-9) -> None:
        """Reject setpoints that no hovering equilibrium can realize.

        Requires level drones and ``y2d - y1d = a + (l1 + l2) sin(theta2d)``,
        which reduces to ``y2d - y1d = a`` for zero swing bias.
        """
        if abs(self.z1d - self.z2d) > tol:
            raise ConfigurationFault(f"setpoint heights differ: z1d={self.z1d}, z2d={self.z2d}")
        want = p.a + (p.l1 + p.l2) * np.sin(theta2d)
        sep = self.y2d - self.y1d
        if abs(sep - want) > tol:
            raise ConfigurationFault(
                f"setpoint separation y2d - y1d = {sep:.6g} m, expected {want:.6g} m "
                f"(bar length {p.a} with swing bias {theta2d:.4g} rad)"
            )

    @classmethod
    def level(cls, y1d: float, z: float, p: PhysicalParams, theta2d: float = 0.0) -> "Setpoint":
        sep = p.a + (p.l1 + p.l2) * np.sin(theta2d)
        return cls(y1d, z, y1d + sep, z)


@dataclass(frozen=True)
class DroneCommand:
    f: float
    phi: float


class TrackingErrors(NamedTuple):
    ey1: np.ndarray
    ez1: np.ndarray
    ey2: np.ndarray
    ez2: np.ndarray
    yd1: np.ndarray
    zd1: np.ndarray
    yd2: np.ndarray
    zd2: np.ndarray

    @property
    def ey(self):
        return self.ey1 - self.ey2


def tracking_errors(q, qdot, sp: Setpoint, p: PhysicalParams) -> TrackingErrors:
    xi = dyn.forward_kinematics(q, p)
    v = dyn.velocity_kinematics(q, qdot, p)
    return TrackingErrors(
        xi.xi1[..., 0] - sp.y1d,
        xi.xi1[..., 1] - sp.z1d,
        xi.xi2[..., 0] - sp.y2d,
        xi.xi2[..., 1] - sp.z2d,
        v[..., 0],
        v[..., 1],
        v[..., 2],
        v[..., 3],
    )


def barrier_force(ey, gains: Gains):
    """``sigma rho e_y / (rho - e_y^2)^2``; faults at or beyond the pole."""
    ey = np.asarray(ey, dtype=float)
    if gains.sigma == 0:
        return np.zeros_like(ey)
    gap = gains.rho - ey * ey
    if np.any(gap <= 0):
        raise BarrierDomainFault(
            f"e_y^2 = {float(np.max(ey * ey)):.6g} reached rho = {gains.rho:.6g}"
        )
    return gains.sigma * gains.rho * ey / (gap * gap)


def barrier_potential(ey, gains: Gains):
    ey = np.asarray(ey, dtype=float)
    if gains.sigma == 0:
        return np.zeros_like(ey)
    gap = gains.rho - ey * ey
    if np.any(gap <= 0):
        raise BarrierDomainFault(
            f"e_y^2 = {float(np.max(ey * ey)):.6g} reached rho = {gains.rho:.6g}"
        )
    return gains.sigma * ey * ey / (2.0 * gap)


def _swing_rate_sq(qdot):
    qd = np.asarray(qdot, dtype=float)
    return qd[..., 2] ** 2 + qd[..., 3] ** 2 + qd[..., 4] ** 2


def proposed_wrench(q, qdot, sp: Setpoint, gains: Gains, p: PhysicalParams) -> np.ndarray:
    """Nonlinear cooperative control law; returns ``[u1, u2, u3, u4]``."""
    e = tracking_errors(q, qdot, sp, p)
    w2 = _swing_rate_sq(qdot)
    bias = 0.5 * p.m3 * p.g * np.tan(gains.theta2d)
    bar = barrier_force(e.ey, gains)
    u1 = -gains.kp1 * e.ey1 - gains.kd1 * e.yd1 - gains.ka1 * w2 * e.yd1 - bias - bar
    u3 = -gains.kp2 * e.ey2 - gains.kd2 * e.yd2 - gains.ka2 * w2 * e.yd2 + bias + bar
    u2 = -gains.kp3 * e.ez1 - gains.kd3 * e.zd1 + 0.5 * (2 * p.m1 + p.m3) * p.g
    u4 = -gains.kp4 * e.ez2 - gains.kd4 * e.zd2 + 0.5 * (2 * p.m2 + p.m3) * p.g
    u = np.stack([u1, u2, u3, u4], axis=-1)
    check_actuation(u)
    return u


def pd_wrench(q, qdot, sp: Setpoint, gains: Gains, p: PhysicalParams) -> np.ndarray:
    """PD plus gravity feedforward: the proposed law with ka = sigma = theta2d = 0."""
    return proposed_wrench(q, qdot, sp, gains.as_pd(), p)


def check_actuation(u) -> None:
    u = np.asarray(u)
    if np.any(u[..., 1] <= 0) or np.any(u[..., 3] <= 0):
        raise ActuationFault("thrust vertical component is not positive", state=np.array(u))


def decompose(u) -> tuple[DroneCommand, DroneCommand]:
    """Recover ``(f, phi)`` per drone from the four thrust components."""
    u = np.asarray(u, dtype=float)
    check_actuation(u)
    u1, u2, u3, u4 = (float(x) for x in u)
    return (
        DroneCommand(float(np.hypot(u1, u2)), float(np.arctan2(u1, u2))),
        DroneCommand(float(np.hypot(u3, u4)), float(np.arctan2(u3, u4))),
    )


def recompose(c1: DroneCommand, c2: DroneCommand) -> np.ndarray:
    return np.array(
        [c1.f * np.sin(c1.phi), c1.f * np.cos(c1.phi), c2.f * np.sin(c2.phi), c2.f * np.cos(c2.phi)]
    )


def saturate(u, f_max: float | None):
    """Cap each drone's total thrust at ``f_max`` keeping its direction.

    Returns the capped wrench and a boolean saying whether any cap was active.
    """
    if f_max is None:
        return u, False
    u = np.array(u, dtype=float)
    hit = False
    for i in (0, 2):
        f = np.hypot(u[..., i], u[..., i + 1])
        over = f > f_max
        if np.any(over):
            hit = True
            scale = np.where(over, f_max / np.where(over, f, 1.0), 1.0)
            u[..., i] *= scale
            u[..., i + 1] *= scale
    return u, hit


def validate_rho(ey1_0: float, ey2_0: float, rho: float) -> bool:
    """Barrier admissibility of the initial error: ``rho > (e_y1(0) - e_y2(0))^2``."""
    return bool(rho > (ey1_0 - ey2_0) ** 2)


def lyapunov_value(q, qdot, sp: Setpoint, gains: Gains, p: PhysicalParams):
    e = tracking_errors(q, qdot, sp, p)
    V = dyn.storage_energy(q, qdot, p)
    V = V + 0.5 * (
        gains.kp1 * e.ey1**2 + gains.kp2 * e.ey2**2 + gains.kp3 * e.ez1**2 + gains.kp4 * e.ez2**2
    )
    V = V + barrier_potential(e.ey, gains)
    return V + 0.5 * p.m3 * p.g * e.ey * np.tan(gains.theta2d)


def lyapunov_rate_expected(q, qdot, gains: Gains, p: PhysicalParams):
    """Closed-loop ``dV/dt`` in closed form; nonpositive by construction."""
    v = dyn.velocity_kinematics(q, qdot, p)
    yd1, zd1, yd2, zd2 = v[..., 0], v[..., 1], v[..., 2], v[..., 3]
    w2 = _swing_rate_sq(qdot)
    return (
        -gains.ka1 * w2 * yd1**2
        - gains.ka2 * w2 * yd2**2
        - gains.kd1 * yd1**2
        - gains.kd2 * yd2**2
        - gains.kd3 * zd1**2
        - gains.kd4 * zd2**2
    )


CONTROLLERS = {"proposed": proposed_wrench, "pd": pd_wrench}


def effective_gains(controller: str, gains: Gains) -> Gains:
    """Gains the chosen law actually uses (the PD baseline zeroes the extra terms)."""
    if controller == "pd":
        return gains.as_pd()
    if controller == "proposed":
        return gains
    raise ValueError(f"unknown controller {controller!r}")
