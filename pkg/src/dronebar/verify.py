"""Numerical audits of the model, the controller's Lyapunov argument and the two lemmas.

Every check returns an :class:`AuditReport`. Reports nest: a suite report
passes only if all of its children pass, and its ``max_residual`` is the worst
child residual expressed as a fraction of that child's tolerance.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels as _k
from . import control as ctl
from . import dynamics as dyn
from . import simulate as sim
from .control import Gains
from .dynamics import PhysicalParams

HALF_PI = 0.5 * math.pi

DEFAULT_TOLERANCES = {
    "monotone": 1e-8,
    "lyapunov_rate": 1e-6,
    "power_balance": 1e-6,
}


@dataclass
class AuditReport:
    name: str
    samples: int
    max_residual: float
    tolerance: float
    passed: bool
    offending: dict | None = None
    details: dict = field(default_factory=dict)
    children: list = field(default_factory=list)

    def __post_init__(self):
        if not self.passed and self.offending is None:
            self.offending = {"note": "no single offending sample"}

    @classmethod
    def combine(cls, name: str, children: list["AuditReport"], **details) -> "AuditReport":
        worst = max(children, key=lambda c: _ratio(c), default=None)
        failed = [c for c in children if not c.passed]
        return cls(
            name=name,
            samples=sum(c.samples for c in children),
            max_residual=_ratio(worst) if worst is not None else 0.0,
            tolerance=1.0,
            passed=not failed,
            offending=None if not failed else {"check": failed[0].name, **(failed[0].offending or {})},
            details=details,
            children=children,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "samples": self.samples,
            "max_residual": _jsonable(self.max_residual),
            "tolerance": self.tolerance,
            "offending": _jsonable(self.offending),
            "details": _jsonable(self.details),
            "children": [c.to_dict() for c in self.children],
        }

    def summary_lines(self, indent: int = 0) -> list[str]:
        mark = "PASS" if self.passed else "FAIL"
        pad = "  " * indent
        lines = [
            f"{pad}[{mark}] {self.name}: max residual {self.max_residual:.3g} "
            f"(tol {self.tolerance:.3g}, n={self.samples})"
        ]
        if not self.passed and not self.children and self.offending:
            lines.append(f"{pad}       offending: {_jsonable(self.offending)}")
        for c in self.children:
            lines.extend(c.summary_lines(indent + 1))
        return lines


def _ratio(r: AuditReport | None) -> float:
    if r is None:
        return 0.0
    if r.tolerance == 0:
        return math.inf if r.max_residual > 0 else 0.0
    return float(r.max_residual / r.tolerance)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _check(name, residuals, tol, samples_q, extra=None, details=None) -> AuditReport:
    """Build a leaf report from a per-sample residual vector (NaN counts as failure)."""
    r = np.asarray(residuals, dtype=float)
    bad = ~(r <= tol)
    worst = int(np.nanargmax(np.where(np.isnan(r), np.inf, r))) if r.size else 0
    idx = int(np.flatnonzero(bad)[0]) if np.any(bad) else worst
    offending = None
    if np.any(bad):
        offending = {"index": idx, "residual": float(r[idx]), "q": samples_q[idx].tolist()}
        if extra is not None:
            offending.update({k: np.asarray(v[idx]).tolist() for k, v in extra.items()})
    return AuditReport(
        name=name,
        samples=int(r.size),
        max_residual=float(np.nanmax(np.where(np.isnan(r), np.inf, r))) if r.size else 0.0,
        tolerance=tol,
        passed=not np.any(bad),
        offending=offending,
        details=details or {},
    )


# ---------------------------------------------------------------------------
# sampling


def sample_configurations(rng: np.random.Generator, n: int, margin: float = 1e-3) -> np.ndarray:
    """Random ``q`` with position in a 4 m box and angles inside the open domain."""
    q = np.empty((n, 5))
    q[:, 0] = rng.uniform(-2.0, 2.0, n)
    q[:, 1] = rng.uniform(0.0, 4.0, n)
    q[:, 2:] = rng.uniform(-HALF_PI + margin, HALF_PI - margin, (n, 3))
    return q


def sample_noncollinear(rng: np.random.Generator, n: int, margin: float = 1e-3) -> np.ndarray:
    """Angle triples in the domain that also keep each rope out of line with the bar.

    Rejection sampling on ``|th2 + th3| < pi/2`` and ``|th1 - th3| < pi/2``,
    the two geometric conditions under which both cosine products in the
    lemma's determinant are positive.
    """
    out = np.empty((0, 3))
    while len(out) < n:
        th = rng.uniform(-HALF_PI + margin, HALF_PI - margin, (2 * n, 3))
        keep = (np.abs(th[:, 1] + th[:, 2]) < HALF_PI - margin) & (
            np.abs(th[:, 0] - th[:, 2]) < HALF_PI - margin
        )
        out = np.concatenate([out, th[keep]])
    return out[:n]


def _central(f: Callable, x: np.ndarray, direction: np.ndarray, h: float):
    """Fourth-order central difference of ``f`` at ``x`` along ``direction``."""
    return (
        -f(x + 2 * h * direction) + 8 * f(x + h * direction)
        - 8 * f(x - h * direction) + f(x - 2 * h * direction)
    ) / (12 * h)


# ---------------------------------------------------------------------------
# dynamics oracles


def dynamics_cross_checks(
    samples: int,
    p: PhysicalParams | None = None,
    *,
    seed: int = 0,
    inertia: Callable | None = None,
) -> AuditReport:
    """Run the independent model oracles on random states.

    ``inertia`` replaces the inertia matrix in the finite-difference oracles
    (and the symmetry/definiteness check); passing a corrupted version is the
    negative control.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    p = p or PhysicalParams()
    M_of = inertia or (lambda q: dyn.inertia_matrix(q, p))
    rng = np.random.default_rng(seed)
    q = sample_configurations(rng, samples)
    qd = rng.normal(size=(samples, 5))
    qd[: max(1, samples // 100)] = 0.0  # a few resting samples

    M = M_of(q)
    asym = np.max(np.abs(M - np.swapaxes(M, -1, -2)), axis=(-1, -2))
    eig_min = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))[:, 0]
    sym_rep = _check("inertia_symmetric", asym, 0.0, q)
    pd_rep = _check(
        "inertia_positive_definite", np.where(eig_min > 0, 0.0, 1.0), 0.0, q,
        extra={"eig_min": eig_min}, details={"smallest_eigenvalue": float(np.min(eig_min))},
    )

    C = dyn.coriolis_matrix(q, qd, p)
    h = 1e-3
    Mdot = _central(M_of, q, qd, h)
    skew = np.abs(np.einsum("ni,nij,nj->n", qd, Mdot - 2 * C, qd))
    skew_rep = _check(
        "skew_symmetry", skew / (1.0 + np.sum(qd**2, axis=1)), 1e-9, q, extra={"qdot": qd}
    )

    # Euler-Lagrange expansion with finite-difference partials of M
    D_fd = np.stack([_central(M_of, q, np.eye(5)[k], h) for k in range(5)], axis=1)
    Mdot_fd = np.einsum("nkij,nk->nij", D_fd, qd)
    h_fd = np.einsum("nij,nj->ni", Mdot_fd, qd) - 0.5 * np.einsum("nijk,nj,nk->ni", D_fd, qd, qd)
    h_an = np.einsum("nij,nj->ni", C, qd)
    scale = np.maximum(np.linalg.norm(h_fd, axis=1), 1e-12)
    chr_res = np.where(
        np.linalg.norm(h_fd, axis=1) + np.linalg.norm(h_an, axis=1) == 0.0,
        0.0,
        np.linalg.norm(h_an - h_fd, axis=1) / scale,
    )
    chr_rep = _check("christoffel_vs_finite_difference", chr_res, 1e-6, q, extra={"qdot": qd})

    u = rng.normal(scale=10.0, size=(samples, 4))
    Q = dyn.generalized_forces(q, u, p)
    Q_vw = dyn.external_force_to_generalized(q, "drone1", u[:, :2], p) + dyn.external_force_to_generalized(
        q, "drone2", u[:, 2:], p
    )
    jt_rep = _check(
        "jacobian_transpose", np.max(np.abs(Q - Q_vw), axis=1), 1e-10, q, extra={"u": u}
    )

    U = lambda x: dyn.potential_energy(x, p)  # noqa: E731
    G_fd = np.stack([_central(U, q, np.eye(5)[k], h) for k in range(5)], axis=1)
    grav_rep = _check(
        "gravity_gradient", np.max(np.abs(dyn.gravity_vector(q, p) - G_fd), axis=1), 1e-8, q
    )

    def pos(x):
        xi = dyn.forward_kinematics(x, p)
        return np.concatenate([xi.xi1, xi.xi2], axis=-1)

    v_fd = _central(pos, q, qd, 1e-4)
    v_res = np.max(np.abs(dyn.velocity_kinematics(q, qd, p) - v_fd), axis=1)
    vel_rep = _check("velocity_kinematics", v_res, 1e-7, q, extra={"qdot": qd})

    return AuditReport.combine(
        "dynamics",
        [sym_rep, pd_rep, skew_rep, chr_rep, jt_rep, grav_rep, vel_rep],
        params=dataclasses.asdict(p),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# lemma 1


def lemma1_matrix(theta, p: PhysicalParams) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    S1, C1 = np.sin(th[..., 0]), np.cos(th[..., 0])
    S2, C2 = np.sin(th[..., 1]), np.cos(th[..., 1])
    S3, C3 = np.sin(th[..., 2]), np.cos(th[..., 2])
    m2, m3, l1, l2, a = p.m2, p.m3, p.l1, p.l2, p.a
    A = np.empty(th.shape[:-1] + (3, 3))
    A[..., 0, 0] = (m2 + m3) * l1 * C1
    A[..., 0, 1] = m2 * l2 * C2
    A[..., 0, 2] = -(m2 + 0.5 * m3) * a * S3
    A[..., 1, 0] = l1 * C1
    A[..., 1, 1] = l2 * C2
    A[..., 1, 2] = -a * S3
    A[..., 2, 0] = l1 * S1
    A[..., 2, 1] = -l2 * S2
    A[..., 2, 2] = a * C3
    return A


def lemma1_closed_form(theta, p: PhysicalParams):
    th = np.asarray(theta, dtype=float)
    t1, t2, t3 = th[..., 0], th[..., 1], th[..., 2]
    return 0.5 * p.m3 * p.l1 * p.l2 * p.a * (
        np.cos(t1) * np.cos(t2 + t3) + np.cos(t2) * np.cos(t1 - t3)
    )


def lemma1_check(samples: int, p: PhysicalParams | None = None, *, seed: int = 0) -> AuditReport:
    """Closed-form determinant against ``numpy.linalg.det`` and its sign.

    Samples come from :func:`sample_noncollinear`. The report also counts how
    many samples drawn from the plain angle box give a nonpositive
    determinant, which shows why the extra geometric conditions are needed.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    p = p or PhysicalParams()
    rng = np.random.default_rng(seed)
    th = sample_noncollinear(rng, samples)
    num = np.linalg.det(lemma1_matrix(th, p))
    cf = lemma1_closed_form(th, p)
    q = np.concatenate([np.zeros((samples, 2)), th], axis=1)
    eq = _check("determinant_closed_form", np.abs(num - cf), 1e-10, q,
                extra={"numeric": num, "closed_form": cf})
    pos = _check("determinant_positive", np.where(cf > 0, 0.0, 1.0), 0.0, q,
                 extra={"closed_form": cf},
                 details={"min_determinant": float(np.min(cf))})
    box = rng.uniform(-HALF_PI, HALF_PI, (samples, 3))
    box_nonpos = int(np.sum(lemma1_closed_form(box, p) <= 0))
    return AuditReport.combine(
        "lemma1", [eq, pos],
        determinant_at_rest=float(lemma1_closed_form(np.zeros(3), p)),
        plain_box_nonpositive=box_nonpos,
        plain_box_samples=samples,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# lemma 2


@dataclass
class Lemma2Scan:
    grid: np.ndarray
    residual: np.ndarray
    roots: list
    report: AuditReport


def lemma2_residual(eps, psi, p: PhysicalParams, gains: Gains):
    """Infeasibility of the hover balance for a given ``e_z2`` and horizontal thrust.

    ``psi`` parametrizes the right drone's horizontal thrust as
    ``F = (m3 g / 2) tan(psi)``. For that ``F`` the three balance equations fix
    all three angles; what remains is the vertical closed-chain constraint and
    the horizontal control law with the position errors implied by the
    horizontal chain. The returned value is the norm of those two residuals,
    scaled by ``l1`` and ``m3 g / 2``; ``inf`` where no admissible angles exist.
    """
    eps = np.asarray(eps, dtype=float)
    psi = np.asarray(psi, dtype=float)
    h = 0.5 * p.m3 * p.g
    F = h * np.tan(psi)
    d1 = h + gains.kp4 * eps
    d2 = h - gains.kp4 * eps
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.arctan(F / d1)
        t2 = np.arctan(F / d2)
        t3 = np.where(F != 0.0, np.arctan(-gains.kp4 * eps / np.where(F != 0.0, F, 1.0)), 0.0)
    # F = 0 only balances the third equation when e_z2 = 0
    feasible = (d1 > 0) & (d2 > 0) & ((F != 0.0) | (eps == 0.0))
    rz = (-p.l1 * np.cos(t1) + p.l2 * np.cos(t2) + p.a * np.sin(t3)
          - eps * (1.0 + gains.kp4 / gains.kp3)) / p.l1
    sep = p.l1 * np.sin(t1) + p.l2 * np.sin(t2) + p.a * np.cos(t3)
    want = p.a + (p.l1 + p.l2) * np.sin(gains.theta2d)
    ey2 = (sep - want) / (1.0 + gains.kp2 / gains.kp1)
    ey1 = -(gains.kp2 / gains.kp1) * ey2
    ey = ey1 - ey2
    gap = gains.rho - ey * ey
    inside = gap > 0
    bar = np.where(inside, gains.sigma * gains.rho * ey / np.where(inside, gap, 1.0) ** 2, 0.0)
    law = -gains.kp2 * ey2 + h * np.tan(gains.theta2d) + bar
    rF = (F - law) / h
    r = np.hypot(rz, rF)
    return np.where(feasible & inside, r, np.inf)


def _min_over_psi(eps: np.ndarray, p, gains, n_psi: int = 2001, iters: int = 80) -> np.ndarray:
    psi = np.linspace(-HALF_PI, HALF_PI, n_psi + 2)[1:-1]
    step = psi[1] - psi[0]
    out = np.empty(eps.shape)
    chunk = max(1, 4_000_000 // n_psi)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    for s in range(0, eps.size, chunk):
        e = eps[s : s + chunk]
        R = lemma2_residual(e[:, None], psi[None, :], p, gains)
        j = np.argmin(R, axis=1)
        best = R[np.arange(e.size), j]
        lo = np.clip(psi[j] - step, -HALF_PI + 1e-12, HALF_PI - 1e-12)
        hi = np.clip(psi[j] + step, -HALF_PI + 1e-12, HALF_PI - 1e-12)
        c = hi - invphi * (hi - lo)
        d = lo + invphi * (hi - lo)
        fc = lemma2_residual(e, c, p, gains)
        fd = lemma2_residual(e, d, p, gains)
        for _ in range(iters):
            left = fc < fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            c_new = np.where(left, hi - invphi * (hi - lo), d)
            d_new = np.where(left, c, lo + invphi * (hi - lo))
            fc, fd = (
                np.where(left, lemma2_residual(e, c_new, p, gains), fd),
                np.where(left, fc, lemma2_residual(e, d_new, p, gains)),
            )
            c, d = c_new, d_new
        out[s : s + chunk] = np.minimum(best, np.minimum(fc, fd))
    return out


def lemma2_scan(
    p: PhysicalParams | None = None,
    gains: Gains | None = None,
    e_z2_range: tuple[float, float] = (-0.3, 0.3),
    grid_n: int = 10_001,
    *,
    root_tol: float = 1e-8,
) -> Lemma2Scan:
    """Scan ``e_z2`` for hover balances; the only root should be ``e_z2 = 0``.

    A grid point counts as a root when the best residual over the horizontal
    thrust is below ``root_tol``. Adjacent root points form one root.
    """
    if grid_n < 100:
        raise ValueError("grid_n must be at least 100")
    p = p or PhysicalParams()
    gains = gains or Gains()
    lo, hi = e_z2_range
    grid = np.linspace(lo, hi, grid_n)
    if lo < 0 < hi:
        grid[np.argmin(np.abs(grid))] = 0.0
    res = _min_over_psi(grid, p, gains)
    is_root = res < root_tol
    roots = []
    idx = np.flatnonzero(is_root)
    if idx.size:
        groups = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
        roots = [float(grid[g[np.argmin(res[g])]]) for g in groups]
    spacing = (hi - lo) / (grid_n - 1)
    unique_zero = len(roots) == 1 and abs(roots[0]) <= spacing
    away = np.abs(grid) > 1.5 * spacing
    min_away = float(np.min(res[away])) if np.any(away) else math.inf
    both = np.isfinite(res) & np.isfinite(res[::-1])
    sym = float(np.max(np.abs(res[both] - res[::-1][both]))) if np.allclose(grid, -grid[::-1]) else math.nan
    report = AuditReport(
        name="lemma2",
        samples=int(grid_n),
        max_residual=float(res[np.argmin(np.abs(grid))]),
        tolerance=root_tol,
        passed=unique_zero,
        offending=None if unique_zero else {"roots": roots},
        details={
            "roots": roots,
            "grid_spacing": spacing,
            "min_residual_off_zero": min_away,
            "symmetry_gap": sym,
            "range": [lo, hi],
        },
    )
    return Lemma2Scan(grid, res, roots, report)


# ---------------------------------------------------------------------------
# closed-loop audits


def closed_loop_audit(log: sim.TrajectoryLog, gains: Gains | None = None,
                      tolerances: dict | None = None, name: str = "closed_loop") -> AuditReport:
    """Lyapunov and energy audits of one logged run.

    (a) V nonincreasing within ``tol * (1 + V)`` per step outside disturbance
    windows; (b) per-step V change against the integrated closed-form rate,
    relative to the run's peak predicted change; (c) ``e_y^2 < rho``;
    (d) per-step storage-energy change against the integrated power, relative
    per step. (a)-(c) are only claimed for the proposed controller.
    """
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    rho = gains.rho if gains is not None else log.rho
    kids = []
    q = log.q
    step = slice(1, None)
    if log.fault is not None:
        kids.append(AuditReport("run_completed", len(log), 1.0, 0.0, False,
                                {"fault": log.fault.kind, "t": log.fault.t, "state": log.fault.state}))
    if log.saturated:
        kids.append(AuditReport("no_saturation", len(log), 1.0, 0.0, False,
                                {"note": "thrust saturation voids the Lyapunov identity"}))

    if log.controller == "proposed" and len(log) > 1:
        dV = log.dV[step]
        V0 = log.V[:-1]
        keep = ~log.disturbed[step]
        mono = np.where(keep, dV / (1.0 + np.abs(V0)), -np.inf)
        kids.append(_check("lyapunov_nonincreasing", mono, tol["monotone"], q[1:],
                           extra={"t": log.t[1:], "dV": dV},
                           details={"excluded_disturbed_steps": int(np.sum(~keep))}))
        W = log.lyapunov_predicted[step]
        mis = log.lyapunov_mismatch[step]
        peak = float(np.max(np.abs(W))) if W.size else 0.0
        # same roundoff floor as the per-step residuals, for runs that never move
        scale = max(peak, sim.RESIDUAL_FLOOR * (1.0 + float(np.max(np.abs(log.V)))))
        rate_res = np.abs(mis) / scale
        kids.append(_check("lyapunov_rate_identity", rate_res, tol["lyapunov_rate"], q[1:],
                           extra={"t": log.t[1:], "mismatch": mis, "predicted": W},
                           details={"peak_predicted_change": peak,
                                    "max_pointwise_relative": float(np.nanmax(log.res_lyapunov[step])),
                                    "argmax_pointwise_t": float(log.t[1 + int(np.nanargmax(log.res_lyapunov[step]))])}))
        ey2 = log.ey**2
        kids.append(_check("barrier_invariance", ey2 / rho, 1.0 - 1e-15, q,
                           extra={"t": log.t, "ey": log.ey},
                           details={"max_ey_sq": float(np.max(ey2)), "rho": rho}))
    if len(log) > 1:
        kids.append(_check("power_balance", log.res_power[step], tol["power_balance"], q[1:],
                           extra={"t": log.t[1:]}))
    return AuditReport.combine(name, kids, controller=log.controller, steps=len(log) - 1)


def _free_energy_drift(p: PhysicalParams, duration: float, dt: float) -> float:
    x = sim.initial_state((0.0, 1.5, p.a + 0.3, 1.5), p)
    x0 = np.concatenate([x.q, [0.3, 0.5, 0.05, -0.04, 0.03]])
    traj, status = _k.free_flight(x0, dt, int(round(duration / dt)), _k.pack_params(p))
    if status != _k.OK:
        return math.inf
    q, qd = traj[:, :5], traj[:, 5:]
    H = dyn.kinetic_energy(q, qd, p) + dyn.potential_energy(q, p)
    return float(np.max(np.abs(H - H[0])) / abs(H[0]))


def free_energy_audit(p: PhysicalParams | None = None, duration: float = 10.0,
                      dt: float = 1e-3, tol: float = 1e-7) -> AuditReport:
    """Unforced flight conserves kinetic plus gravitational energy."""
    p = p or PhysicalParams()
    drift = _free_energy_drift(p, duration, dt)
    return AuditReport("free_energy_conservation", int(round(duration / dt)), drift, tol, drift <= tol,
                       None if drift <= tol else {"relative_drift": drift})


def scenario_audits(names: list[str] | None = None) -> AuditReport:
    """Lyapunov audits on every shipped scenario without disturbances, plus the
    power balance on every shipped scenario as configured."""
    names = names or sim.shipped_scenarios()
    kids = []
    for n in names:
        cfg = sim.load_scenario(n)
        kids.append(closed_loop_audit(sim.run(cfg.without_disturbances()), cfg.gains, name=f"{n}/undisturbed"))
        if cfg.disturbances:
            kids.append(closed_loop_audit(sim.run(cfg), cfg.gains, name=f"{n}/disturbed"))
    return AuditReport.combine("closed_loop", kids)


# ---------------------------------------------------------------------------
# basin probe


@dataclass(frozen=True)
class PerturbationGrid:
    position: tuple[float, ...] = (-0.5, 0.0, 0.5)
    angle: tuple[float, ...] = (-math.radians(15), 0.0, math.radians(15))

    def offsets(self) -> np.ndarray:
        P, A = self.position, self.angle
        grid = np.array(np.meshgrid(P, P, A, A, A, indexing="ij")).reshape(5, -1).T
        return grid


def equilibrium_basin_probe(
    config: sim.ScenarioConfig | None = None,
    grid: PerturbationGrid | None = None,
    *,
    t_max: float = 120.0,
    pos_tol: float = 1e-3,
    ang_tol: float = math.radians(0.5),
    dwell: float = 2.0,
) -> AuditReport:
    """Perturb the equilibrium of the first setpoint and check convergence back.

    Each grid offset ``(dy, dz, dth1, dth2, dth3)`` is added to the resting
    equilibrium configuration. Offsets that leave the angle domain or violate
    the barrier precondition are rejected up front and listed, not run.
    """
    cfg = config or sim.load_scenario("hover")
    grid = grid or PerturbationGrid()
    p = cfg.params
    entry = cfg.setpoints[0]
    sp, g, th = entry.setpoint, cfg.gains_for(entry), cfg.theta2d_for(entry)
    q_eq = np.array([sp.y1d, sp.z1d, th, th, 0.0])
    offs = grid.offsets()
    P, SP, GN = _k.pack_params(p), _k.pack_setpoint(sp), _k.pack_gains(g)
    n_max = int(round(t_max / cfg.dt))
    dwell_steps = int(round(dwell / cfg.dt))
    fmax = -1.0 if cfg.thrust_limit is None else float(cfg.thrust_limit)

    results, rejected = [], []
    times = np.full(len(offs), np.nan)
    for i, d in enumerate(offs):
        q0 = q_eq + d
        if dyn.angle_violation(q0):
            rejected.append({"offset": d.tolist(), "reason": "angle domain"})
            continue
        e = ctl.tracking_errors(q0, np.zeros(5), sp, p)
        if cfg.controller == "proposed" and g.sigma > 0 and not ctl.validate_rho(float(e.ey1), float(e.ey2), g.rho):
            rejected.append({"offset": d.tolist(), "reason": "barrier precondition"})
            continue
        x0 = np.concatenate([q0, np.zeros(5)])
        status, k_in, _ = _k.converge(x0, cfg.dt, n_max, SP, GN, P, th, pos_tol, ang_tol, dwell_steps, fmax)
        conv = status == _k.OK and k_in >= 0
        times[i] = k_in * cfg.dt if conv else np.nan
        results.append({"offset": d.tolist(), "converged": bool(conv), "status": _k.STATUS[status],
                        "time": None if not conv else float(k_in * cfg.dt)})
    failed = [r for r in results if not r["converged"]]
    worst = float(np.nanmax(times)) if np.any(~np.isnan(times)) else 0.0
    return AuditReport(
        name="basin",
        samples=len(results),
        max_residual=worst if not failed else math.inf,
        tolerance=t_max,
        passed=not failed,
        offending=None if not failed else failed[0],
        details={
            "rejected": rejected,
            "simulated": len(results),
            "slowest_convergence": worst,
            "criterion": {"position": pos_tol, "angle": ang_tol, "dwell": dwell},
            "results": results,
        },
    )


# ---------------------------------------------------------------------------
# suites

SUITES = ("all", "lemma1", "lemma2", "dynamics", "closed_loop", "basin")


def run_suite(suite: str, *, seed: int = 0, samples: int = 10_000,
              p: PhysicalParams | None = None) -> AuditReport:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    p = p or PhysicalParams()
    parts = {
        "lemma1": lambda: lemma1_check(samples, p, seed=seed),
        "lemma2": lambda: lemma2_scan(p, Gains()).report,
        "dynamics": lambda: dynamics_cross_checks(samples, p, seed=seed),
        "closed_loop": lambda: AuditReport.combine(
            "closed_loop", [free_energy_audit(p), integrator_order_study(), scenario_audits()]
        ),
        "basin": lambda: equilibrium_basin_probe(),
    }
    if suite == "all":
        return AuditReport.combine("all", [f() for f in parts.values()])
    return parts[suite]()


# ---------------------------------------------------------------------------
# integrator order


def integrator_order_study(
    config: sim.ScenarioConfig | None = None,
    *,
    t_end: float = 2.0,
    steps: tuple[float, ...] = (0.02, 0.01, 0.005),
    min_ratio: float = 12.0,
) -> AuditReport:
    """Error of the fixed-step closed-loop RK4 against a tight adaptive reference.

    Reports the global error at ``t_end`` and the one-step (local) error from
    reference states, for each step size. Both must shrink by at least
    ``min_ratio`` per halving (fourth order predicts 16x globally and 32x
    locally).
    """
    from scipy.integrate import solve_ivp

    cfg = (config or sim.load_scenario("exp1_test1")).without_disturbances()
    p = cfg.params
    entry = cfg.setpoints[0]
    P, SP, GN = _k.pack_params(p), _k.pack_setpoint(entry.setpoint), _k.pack_gains(cfg.gains_for(entry))
    DST = np.zeros((0, 6))
    act = np.zeros(0, dtype=np.bool_)
    uh = np.zeros(4)
    x0 = np.concatenate([sim.initial_state(cfg.initial_positions, p).x, [0.0, 0.0]])

    def rhs(_t, x):
        out = np.empty(12)
        st, _ = _k.closed_loop_rhs(x, SP, GN, P, DST, act, -1.0, 0, uh, out)
        if st != _k.OK:
            raise RuntimeError(f"reference trajectory left the admissible set ({_k.STATUS[st]})")
        return out

    ref = solve_ivp(rhs, (0.0, t_end), x0, method="DOP853", rtol=1e-13, atol=1e-13, dense_output=True)

    def march(x, dt, n):
        xn = np.empty(12)
        for _ in range(n):
            x[10:] = 0.0
            _k.rk4_step(x, dt, SP, GN, P, DST, act, -1.0, 0, uh, xn)
            x = xn.copy()
        return x

    glob, loc = [], []
    probe = np.linspace(0.0, t_end - max(steps), 9)
    for dt in steps:
        n = int(round(t_end / dt))
        xe = march(x0.copy(), dt, n)
        glob.append(float(np.max(np.abs(xe[:10] - ref.sol(t_end)[:10]))))
        errs = []
        for t in probe:
            xs = ref.sol(t).copy()
            xs[10:] = 0.0
            x1 = march(xs, dt, 1)
            errs.append(np.max(np.abs(x1[:10] - ref.sol(t + dt)[:10])))
        loc.append(float(np.max(errs)))
    g_ratio = [glob[i] / glob[i + 1] for i in range(len(steps) - 1)]
    l_ratio = [loc[i] / loc[i + 1] for i in range(len(steps) - 1)]
    worst = min(g_ratio + l_ratio)
    passed = worst >= min_ratio
    return AuditReport(
        name="integrator_order",
        samples=len(steps),
        max_residual=min_ratio / worst if worst > 0 else math.inf,
        tolerance=1.0,
        passed=passed,
        offending=None if passed else {"global_ratios": g_ratio, "local_ratios": l_ratio},
        details={
            "dt": list(steps),
            "global_error": glob,
            "local_error": loc,
            "global_ratios": g_ratio,
            "local_ratios": l_ratio,
            "reference_steps": int(ref.t.size),
        },
    )
