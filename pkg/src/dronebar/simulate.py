"""Fixed-step closed-loop simulation, scenario files and run metrics.

Integration is classical RK4 at a fixed step. Two energy-type integrals ride
along with the state so each step can be audited without numerical
differentiation: the predicted storage-energy input and the predicted
Lyapunov rate. Comparing their RK4 increments against the change of the
corresponding state functions gives per-step residuals that are O(dt^5)
when model and controller are consistent.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels as _k
from . import control as ctl
from . import dynamics as dyn
from .control import Gains, Setpoint
from .dynamics import GeneralizedState, PhysicalParams
from .errors import ConfigurationFault

POSITION_FLOOR = 0.01
ANGLE_FLOOR = math.radians(0.5)
CHANNELS = ("ey1", "ez1", "ey2", "ez2", "th1", "th2", "th3")
CSV_COLUMNS = (
    ["t"]
    + [f"q{i}" for i in range(5)]
    + [f"qdot{i}" for i in range(5)]
    + [f"u{i}" for i in range(1, 5)]
    + ["y1", "z1", "y2", "z2", "y3", "z3"]
    + ["V", "E", "res_power", "res_lyapunov", "barrier", "fault"]
)
# relative residuals use this fraction of (1 + |value|) as a roundoff floor
RESIDUAL_FLOOR = 1e-9
_EPS_T = 1e-9


# ---------------------------------------------------------------------------
# disturbances


@dataclass(frozen=True)
class WindDisturbance:
    """Relative-velocity drag on the bar midpoint along y.

    ``profile`` is a list of ``(t_start, speed)`` breakpoints; the speed is
    piecewise constant. The wind (and its drag) exists on ``[profile[0][0], end)``.
    """

    profile: tuple[tuple[float, float], ...]
    end: float | None = None
    drag: float = 0.5
    direction: float = -1.0
    kind: str = field(default="wind", init=False)

    def __post_init__(self):
        if not self.profile:
            raise ConfigurationFault("wind profile must not be empty")
        times = [t for t, _ in self.profile]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationFault("wind profile times must be increasing")
        if self.direction not in (-1.0, 1.0):
            raise ConfigurationFault("wind direction must be +1 or -1")
        if self.drag < 0:
            raise ConfigurationFault("wind drag gain must be nonnegative")
        if self.end is not None and self.end <= times[0]:
            raise ConfigurationFault("wind end must be after its start")

    @property
    def start(self) -> float:
        return self.profile[0][0]

    def window(self, duration: float) -> tuple[float, float]:
        return self.start, duration if self.end is None else self.end

    def active(self, t: float) -> bool:
        return t + _EPS_T >= self.start and (self.end is None or t + _EPS_T < self.end)

    def speed(self, t: float) -> float:
        v = 0.0
        for tb, s in self.profile:
            if t + _EPS_T >= tb:
                v = s
        return v

    def generalized_force(self, t, q, qdot, p):
        v3 = dyn.bar_velocity(q, qdot, p)
        fy = self.drag * (self.direction * self.speed(t) - v3[..., 0])
        force = np.stack([fy, np.zeros_like(fy)], axis=-1)
        return dyn.external_force_to_generalized(q, "bar_mid", force, p)


@dataclass(frozen=True)
class ImpulseDisturbance:
    """Constant force ``(Fy, Fz)`` on a named point for ``[start, start + duration)``."""

    force: tuple[float, float]
    start: float
    duration: float
    point: str = "bar_mid"
    kind: str = field(default="impulse", init=False)

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigurationFault("impulse duration must be positive")
        if self.point not in dyn.POINTS:
            raise ConfigurationFault(f"unknown application point {self.point!r}")

    def window(self, duration: float) -> tuple[float, float]:
        return self.start, self.start + self.duration

    def active(self, t: float) -> bool:
        return self.start <= t + _EPS_T < self.start + self.duration

    def generalized_force(self, t, q, qdot, p):
        force = np.broadcast_to(np.asarray(self.force, dtype=float), np.shape(q)[:-1] + (2,))
        return dyn.external_force_to_generalized(q, self.point, force, p)


Disturbance = WindDisturbance | ImpulseDisturbance


# ---------------------------------------------------------------------------
# scenario configuration


@dataclass(frozen=True)
class ScheduledSetpoint:
    t: float
    setpoint: Setpoint
    theta2d: float | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    params: PhysicalParams
    gains: Gains
    initial_positions: tuple[float, float, float, float]
    setpoints: tuple[ScheduledSetpoint, ...]
    controller: str = "proposed"
    disturbances: tuple = ()
    duration: float = 60.0
    dt: float = 1e-3
    hold: str = "continuous"
    decimation: int = 1
    thrust_limit: float | None = None

    def __post_init__(self):
        if self.controller not in ctl.CONTROLLERS:
            raise ConfigurationFault(f"controller must be one of {sorted(ctl.CONTROLLERS)}")
        if not self.dt > 0:
            raise ConfigurationFault("dt must be positive")
        if self.duration < 0:
            raise ConfigurationFault("duration must be nonnegative")
        if self.hold not in ("continuous", "zoh"):
            raise ConfigurationFault("hold must be 'continuous' or 'zoh'")
        if self.decimation < 1:
            raise ConfigurationFault("decimation must be >= 1")
        if self.thrust_limit is not None and not self.thrust_limit > 0:
            raise ConfigurationFault("thrust_limit must be positive")
        if not self.setpoints:
            raise ConfigurationFault("at least one setpoint is required")
        if abs(self.setpoints[0].t) > _EPS_T:
            raise ConfigurationFault("the first setpoint must start at t = 0")
        times = [s.t for s in self.setpoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationFault("setpoint times must be increasing")
        for i, s in enumerate(self.setpoints):
            try:
                s.setpoint.check(self.params, self.theta2d_for(s))
            except ConfigurationFault as exc:
                raise ConfigurationFault(f"setpoints[{i}]: {exc}") from None
        for i, d in enumerate(self.disturbances):
            lo, hi = d.window(self.duration)
            if lo < 0 or hi > self.duration + _EPS_T:
                raise ConfigurationFault(
                    f"disturbances[{i}]: window [{lo}, {hi}] outside [0, {self.duration}]"
                )

    @property
    def effective_gains(self) -> Gains:
        return ctl.effective_gains(self.controller, self.gains)

    def theta2d_for(self, s: ScheduledSetpoint) -> float:
        if self.controller == "pd":
            return 0.0
        return self.gains.theta2d if s.theta2d is None else s.theta2d

    def gains_for(self, s: ScheduledSetpoint) -> Gains:
        g = self.effective_gains
        if self.controller == "proposed" and s.theta2d is not None:
            g = dataclasses.replace(g, theta2d=s.theta2d)
        return g

    def segment_at(self, t: float) -> int:
        idx = 0
        for i, s in enumerate(self.setpoints):
            if t + _EPS_T >= s.t:
                idx = i
        return idx

    def barrier_admissible(self) -> bool:
        """Initial inter-drone error check against the first setpoint."""
        y1, _, y2, _ = self.initial_positions
        sp = self.setpoints[0].setpoint
        return ctl.validate_rho(y1 - sp.y1d, y2 - sp.y2d, self.gains.rho)

    def without_disturbances(self) -> "ScenarioConfig":
        return dataclasses.replace(self, disturbances=(), name=f"{self.name}_nodist")

    def with_controller(self, controller: str) -> "ScenarioConfig":
        return dataclasses.replace(self, controller=controller)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "params": dataclasses.asdict(self.params),
            "gains": dataclasses.asdict(self.gains),
            "controller": self.controller,
            "initial_positions": list(self.initial_positions),
            "setpoints": [],
            "disturbances": [],
            "duration": self.duration,
            "dt": self.dt,
            "hold": self.hold,
            "decimation": self.decimation,
            "thrust_limit": self.thrust_limit,
        }
        for s in self.setpoints:
            entry = {"t": s.t, **dataclasses.asdict(s.setpoint)}
            if s.theta2d is not None:
                entry["theta2d"] = s.theta2d
            out["setpoints"].append(entry)
        for d in self.disturbances:
            if isinstance(d, WindDisturbance):
                out["disturbances"].append(
                    {
                        "kind": "wind",
                        "profile": [list(x) for x in d.profile],
                        "end": d.end,
                        "drag": d.drag,
                        "direction": d.direction,
                    }
                )
            else:
                out["disturbances"].append(
                    {
                        "kind": "impulse",
                        "force": list(d.force),
                        "start": d.start,
                        "duration": d.duration,
                        "point": d.point,
                    }
                )
        return out


def _take(d: dict, key: str, where: str, cast=float, default=...):
    if key not in d:
        if default is ...:
            raise ConfigurationFault(f"missing field '{where}{key}'")
        return default
    val = d[key]
    if val is None and default is None:
        return None
    try:
        return cast(val)
    except (TypeError, ValueError):
        raise ConfigurationFault(f"field '{where}{key}': cannot interpret {val!r}") from None


def _dataclass_from(cls, d, where):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigurationFault(f"field '{where}' must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigurationFault(f"field '{where}': unknown keys {sorted(unknown)}")
    kwargs = {k: _take(d, k, f"{where}.") for k in d}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigurationFault(f"field '{where}': {exc}") from None


def config_from_dict(d: dict) -> ScenarioConfig:
    if not isinstance(d, dict):
        raise ConfigurationFault("scenario must be a JSON object")
    known = {
        "name", "params", "gains", "controller", "initial_positions", "setpoints",
        "disturbances", "duration", "dt", "hold", "decimation", "thrust_limit", "description",
    }
    unknown = set(d) - known
    if unknown:
        raise ConfigurationFault(f"unknown top-level keys {sorted(unknown)}")
    params = _dataclass_from(PhysicalParams, d.get("params"), "params")
    gains = _dataclass_from(Gains, d.get("gains"), "gains")

    pos = d.get("initial_positions")
    if not isinstance(pos, list) or len(pos) != 4:
        raise ConfigurationFault("field 'initial_positions' must be [y1, z1, y2, z2]")
    try:
        pos = tuple(float(x) for x in pos)
    except (TypeError, ValueError):
        raise ConfigurationFault("field 'initial_positions' must hold numbers") from None

    sps = d.get("setpoints")
    if not isinstance(sps, list) or not sps:
        raise ConfigurationFault("field 'setpoints' must be a nonempty list")
    schedule = []
    for i, s in enumerate(sps):
        w = f"setpoints[{i}]."
        if not isinstance(s, dict):
            raise ConfigurationFault(f"field 'setpoints[{i}]' must be an object")
        sp = Setpoint(*(_take(s, k, w) for k in ("y1d", "z1d", "y2d", "z2d")))
        schedule.append(
            ScheduledSetpoint(_take(s, "t", w, default=0.0), sp, _take(s, "theta2d", w, default=None))
        )

    dists = []
    for i, e in enumerate(d.get("disturbances", [])):
        w = f"disturbances[{i}]."
        if not isinstance(e, dict):
            raise ConfigurationFault(f"field 'disturbances[{i}]' must be an object")
        kind = e.get("kind")
        if kind == "wind":
            prof = e.get("profile")
            if not isinstance(prof, list) or not prof:
                raise ConfigurationFault(f"field '{w}profile' must be a nonempty list of [t, speed]")
            try:
                prof = tuple((float(a), float(b)) for a, b in prof)
            except (TypeError, ValueError):
                raise ConfigurationFault(f"field '{w}profile' must hold [t, speed] pairs") from None
            dists.append(
                WindDisturbance(
                    prof,
                    end=_take(e, "end", w, default=None),
                    drag=_take(e, "drag", w, default=0.5),
                    direction=_take(e, "direction", w, default=-1.0),
                )
            )
        elif kind == "impulse":
            force = e.get("force")
            if not isinstance(force, list) or len(force) != 2:
                raise ConfigurationFault(f"field '{w}force' must be [Fy, Fz]")
            dists.append(
                ImpulseDisturbance(
                    (float(force[0]), float(force[1])),
                    start=_take(e, "start", w),
                    duration=_take(e, "duration", w),
                    point=_take(e, "point", w, cast=str, default="bar_mid"),
                )
            )
        else:
            raise ConfigurationFault(f"field '{w}kind' must be 'wind' or 'impulse', got {kind!r}")

    return ScenarioConfig(
        name=_take(d, "name", "", cast=str, default="scenario"),
        params=params,
        gains=gains,
        initial_positions=pos,
        setpoints=tuple(schedule),
        controller=_take(d, "controller", "", cast=str, default="proposed"),
        disturbances=tuple(dists),
        duration=_take(d, "duration", "", default=60.0),
        dt=_take(d, "dt", "", default=1e-3),
        hold=_take(d, "hold", "", cast=str, default="continuous"),
        decimation=_take(d, "decimation", "", cast=int, default=1),
        thrust_limit=_take(d, "thrust_limit", "", default=None),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationFault(
            f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return config_from_dict(data)


def shipped_scenarios() -> list[str]:
    root = resources.files("dronebar") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(name: str) -> ScenarioConfig:
    """Load a shipped scenario by name (e.g. ``exp1_test1``) or a JSON path."""
    if name.endswith(".json") or "/" in name:
        return load_config(name)
    res = resources.files("dronebar") / "scenarios" / f"{name}.json"
    if not res.is_file():
        raise ConfigurationFault(f"no shipped scenario named {name!r}; have {shipped_scenarios()}")
    return config_from_dict(json.loads(res.read_text()))


# ---------------------------------------------------------------------------
# integration primitives


def initial_state(positions: Sequence[float], p: PhysicalParams) -> GeneralizedState:
    """Resting configuration with symmetric rope splay and a level bar."""
    y1, z1, y2, z2 = (float(v) for v in positions)
    if abs(z1 - z2) > 1e-12:
        raise ConfigurationFault("initial drone heights must be equal (symmetric splay)")
    if not p.equal_ropes:
        raise ConfigurationFault("symmetric-splay initial state needs equal rope lengths")
    s = ((y2 - y1) - p.a) / (p.l1 + p.l2)
    if not abs(s) < 1.0:
        raise ConfigurationFault(
            f"drone separation {y2 - y1:.4g} m is unreachable with ropes {p.l1}+{p.l2} m and bar {p.a} m"
        )
    th0 = math.asin(s)
    return GeneralizedState(np.array([y1, z1, th0, th0, 0.0]), np.zeros(5), 0.0)


def rk4(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(q, qdot, u, p: PhysicalParams, dt: float, disturbance_Q=None):
    """One RK4 step with the wrench (and disturbance) held constant over the step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)

    def f(x):
        qq, qd = x[..., :5], x[..., 5:]
        return np.concatenate([qd, dyn.forward_dynamics(qq, qd, u, p, disturbance_Q)], axis=-1)

    x = rk4(f, np.concatenate([np.asarray(q, float), np.asarray(qdot, float)], axis=-1), dt)
    return x[..., :5], x[..., 5:]


# ---------------------------------------------------------------------------
# logs and runs


@dataclass
class FaultInfo:
    kind: str
    message: str
    t: float | None
    state: list | None = None


@dataclass
class TrajectoryLog:
    """Per-record arrays on a uniform grid; per-step entries refer to the step ending at that record."""

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    u: np.ndarray
    xi: np.ndarray
    V: np.ndarray
    E: np.ndarray
    res_power: np.ndarray
    res_lyapunov: np.ndarray
    dV: np.ndarray
    barrier: np.ndarray
    ey: np.ndarray
    err: np.ndarray
    segment: np.ndarray
    disturbed: np.ndarray
    flags: list
    energy_input: np.ndarray | None = None
    energy_mismatch: np.ndarray | None = None
    lyapunov_predicted: np.ndarray | None = None
    lyapunov_mismatch: np.ndarray | None = None
    controller: str = "proposed"
    hold: str = "continuous"
    rho: float = float("inf")
    events: list = field(default_factory=list)
    fault: FaultInfo | None = None

    def __len__(self) -> int:
        return len(self.t)

    @property
    def ok(self) -> bool:
        return self.fault is None

    @property
    def saturated(self) -> bool:
        return any("saturation" in f for f in self.flags)

    def rows(self) -> Iterable[list]:
        for k in range(len(self.t)):
            yield (
                [self.t[k], *self.q[k], *self.qdot[k], *self.u[k], *self.xi[k]]
                + [self.V[k], self.E[k], self.res_power[k], self.res_lyapunov[k], self.barrier[k]]
                + [self.flags[k]]
            )


def write_csv(log: TrajectoryLog, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in log.rows():
            w.writerow([repr(float(v)) if not isinstance(v, str) else v for v in row])


def _schedule(cfg: ScenarioConfig, t0: float, n: int):
    """Per-grid-time segment indices and per-step disturbance rows/activity."""
    grid = t0 + cfg.dt * np.arange(n + 1)
    times = np.array([s.t for s in cfg.setpoints])
    seg = np.searchsorted(times, grid + _EPS_T, side="right") - 1
    seg = np.clip(seg, 0, len(times) - 1).astype(np.int64)

    rows, masks = [], []
    tk = grid[:-1] + _EPS_T
    for d in cfg.disturbances:
        if isinstance(d, WindDisturbance):
            live = tk >= d.start
            if d.end is not None:
                live &= tk < d.end
            bps = [tb for tb, _ in d.profile] + [math.inf]
            for j, (tb, speed) in enumerate(d.profile):
                rows.append([0.0, 2.0, 0.0, 0.0, d.drag, d.direction * speed])
                masks.append(live & (tk >= tb) & (tk < bps[j + 1]))
        else:
            rows.append([1.0, _k.POINT_CODES[d.point], d.force[0], d.force[1], 0.0, 0.0])
            masks.append((tk >= d.start) & (tk < d.start + d.duration))
    DST = np.array(rows, dtype=np.float64).reshape(-1, 6)
    ACT = np.array(masks, dtype=np.bool_).reshape(len(rows), n).T.copy()
    return seg, DST, ACT


def run(config: ScenarioConfig, initial: GeneralizedState | None = None) -> TrajectoryLog:
    """Integrate the closed loop for ``config.duration`` seconds.

    Faults halt the run; the partial log is returned with ``log.fault`` set.
    """
    cfg = config
    p = cfg.params
    if initial is None:
        initial = initial_state(cfg.initial_positions, p)
    if cfg.controller == "proposed" and cfg.gains.sigma > 0:
        sp0 = cfg.setpoints[cfg.segment_at(initial.t)].setpoint
        xi2 = dyn.forward_kinematics(initial.q, p).xi2
        if not ctl.validate_rho(initial.q[0] - sp0.y1d, xi2[0] - sp0.y2d, cfg.gains.rho):
            raise ConfigurationFault(
                "barrier precondition violated: rho must exceed (e_y1(0) - e_y2(0))^2"
            )

    dt = cfg.dt
    n = int(round(cfg.duration / dt))
    t0 = float(initial.t)
    seg, DST, ACT = _schedule(cfg, t0, n)
    SPS = np.array([_k.pack_setpoint(s.setpoint) for s in cfg.setpoints])
    GNS = np.array([_k.pack_gains(cfg.gains_for(s)) for s in cfg.setpoints])
    THS = np.array([cfg.theta2d_for(s) for s in cfg.setpoints], dtype=np.float64)
    x0 = np.concatenate([initial.q, initial.qdot]).astype(np.float64)
    fmax = -1.0 if cfg.thrust_limit is None else float(cfg.thrust_limit)
    hold = 0 if cfg.hold == "continuous" else 1
    rec = np.empty((n + 1, _k.R_WIDTH))

    done, status = _k.run_loop(
        x0, t0, dt, n, seg, SPS, GNS, THS, _k.pack_params(p), DST, ACT,
        fmax, hold, int(cfg.decimation), rec,
    )
    if status != _k.OK and math.isnan(rec[0, _k.R_SAT]):
        raise ConfigurationFault(f"initial state is not admissible ({_k.STATUS[status]})")

    rec = rec[: done + 1]
    flags = ["saturation" if s > 0 else "" for s in rec[:, _k.R_SAT]]
    fault = None
    if status != _k.OK:
        kind = _k.STATUS[status]
        t_f = t0 + done * dt
        state = [float(v) for v in rec[done, 1:11]]
        fault = FaultInfo(kind, f"{_FAULT_TEXT[kind]} (t={t_f:.6g} s)", t_f, state)
        flags[-1] = (flags[-1] + ";" if flags[-1] else "") + f"fault:{kind}"

    disturbed = np.zeros(done + 1, dtype=bool)
    if ACT.shape[1]:
        disturbed[1:] = ACT[:done].any(axis=1)
    return TrajectoryLog(
        t=rec[:, _k.R_T].copy(),
        q=rec[:, _k.R_Q].copy(),
        qdot=rec[:, _k.R_QD].copy(),
        u=rec[:, _k.R_U].copy(),
        xi=rec[:, _k.R_XI].copy(),
        V=rec[:, _k.R_V].copy(),
        E=rec[:, _k.R_E].copy(),
        res_power=rec[:, _k.R_RES_POW].copy(),
        res_lyapunov=rec[:, _k.R_RES_LYA].copy(),
        dV=rec[:, _k.R_DV].copy(),
        barrier=rec[:, _k.R_BAR].copy(),
        ey=rec[:, _k.R_EY].copy(),
        err=rec[:, _k.R_ERR].copy(),
        segment=seg[: done + 1].copy(),
        disturbed=disturbed,
        flags=flags,
        energy_input=rec[:, _k.R_W_POW].copy(),
        energy_mismatch=rec[:, _k.R_D_POW].copy(),
        lyapunov_predicted=rec[:, _k.R_W_LYA].copy(),
        lyapunov_mismatch=rec[:, _k.R_D_LYA].copy(),
        controller=cfg.controller,
        hold=cfg.hold,
        rho=cfg.gains.rho,
        events=[(d.kind, *d.window(cfg.duration)) for d in cfg.disturbances],
        fault=fault,
    )


_FAULT_TEXT = {
    "domain": "swing/bar angle left (-pi/2, pi/2)",
    "barrier": "inter-drone error reached the barrier pole",
    "actuation": "commanded thrust has no positive vertical component",
    "dynamics": "inertia matrix is singular",
}


# ---------------------------------------------------------------------------
# metrics


def channel_floors() -> np.ndarray:
    return np.array([POSITION_FLOOR] * 4 + [ANGLE_FLOOR] * 3)


def settling_time(t, e, band: float, floor: float, e0: float | None = None) -> float | None:
    """Time from ``t[0]`` until ``e`` enters and stays in ``+-max(band |e0|, floor)``.

    Returns ``None`` when the final sample is still outside the band.
    """
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    if e0 is None:
        e0 = e[0]
    width = max(band * abs(e0), floor)
    out = np.flatnonzero(np.abs(e) > width)
    if out.size == 0:
        return 0.0
    last = out[-1]
    if last == len(t) - 1:
        return None
    return float(t[last + 1] - t[0])


@dataclass
class EpisodeMetrics:
    start: float
    settling_time: dict
    settled: bool

    @property
    def overall(self) -> float | None:
        vals = list(self.settling_time.values())
        return None if any(v is None for v in vals) else max(vals)


@dataclass
class Metrics:
    settling_time: dict
    settling_overall: float | None
    peak_abs_theta: list
    max_ey_sq: float
    rms_error: dict
    episodes: list
    recovery_times: list
    fault: str | None
    saturated: bool

    def to_dict(self) -> dict:
        return {
            "settling_time": self.settling_time,
            "settling_overall": self.settling_overall,
            "peak_abs_theta": self.peak_abs_theta,
            "max_ey_sq": self.max_ey_sq,
            "rms_error": self.rms_error,
            "episodes": [
                {"start": e.start, "settling_time": e.settling_time, "overall": e.overall}
                for e in self.episodes
            ],
            "recovery_times": self.recovery_times,
            "fault": self.fault,
            "saturated": self.saturated,
        }


def _settling_dict(t, err, band, floors, e0=None):
    out = {}
    for j, name in enumerate(CHANNELS):
        out[name] = settling_time(t, err[:, j], band, floors[j], None if e0 is None else e0[j])
    return out


def _overall(d):
    vals = list(d.values())
    return None if any(v is None for v in vals) else max(vals)


def recovery_after(t, err, t_from, t_until, band, floors, t_peak=None) -> dict:
    """Per-channel settling after a pulse ending at ``t_from``.

    The band is relative to the largest excursion seen from ``t_peak`` (the
    pulse start) up to ``t_until``. A channel still outside its band at
    ``t_until`` is reported as ``None``.
    """
    lo = t_from if t_peak is None else t_peak
    span = (t >= lo - _EPS_T) & (t < t_until - _EPS_T)
    sel = (t >= t_from - _EPS_T) & (t < t_until - _EPS_T)
    if not np.any(sel):
        return {name: None for name in CHANNELS}
    peak = np.max(np.abs(err[span]), axis=0)
    return _settling_dict(t[sel], err[sel], band, floors, peak)


def compute_metrics(log: TrajectoryLog, band: float = 0.02) -> Metrics:
    if len(log) == 0:
        raise ValueError("empty log")
    t, err = log.t, log.err
    floors = channel_floors()
    whole = _settling_dict(t, err, band, floors)

    episodes = []
    starts = [0] + list(np.flatnonzero(np.diff(log.segment)) + 1)
    bounds = starts + [len(t)]
    for a, b in zip(bounds[:-1], bounds[1:]):
        d = _settling_dict(t[a:b], err[a:b], band, floors)
        episodes.append(EpisodeMetrics(float(t[a]), d, _overall(d) is not None))

    recov = []
    windows = []  # overlapping pulses form one episode
    for lo, hi in sorted((ev[1], ev[2]) for ev in log.events if ev[0] == "impulse"):
        if windows and lo <= windows[-1][1] + _EPS_T:
            windows[-1][1] = max(windows[-1][1], hi)
        else:
            windows.append([lo, hi])
    for i, (lo, hi) in enumerate(windows):
        nxt = windows[i + 1][0] if i + 1 < len(windows) else t[-1] + 1.0
        per = recovery_after(t, err, hi, nxt, band, floors, t_peak=lo)
        recov.append({"start": lo, "end": hi, "channels": per, "recovery": _overall(per)})

    ey_sq = log.ey**2
    return Metrics(
        settling_time=whole,
        settling_overall=_overall(whole),
        peak_abs_theta=[float(v) for v in np.max(np.abs(log.q[:, 2:5]), axis=0)],
        max_ey_sq=float(np.max(ey_sq)),
        rms_error={n: float(np.sqrt(np.mean(err[:, j] ** 2))) for j, n in enumerate(CHANNELS)},
        episodes=episodes,
        recovery_times=recov,
        fault=None if log.fault is None else log.fault.kind,
        saturated=log.saturated,
    )


