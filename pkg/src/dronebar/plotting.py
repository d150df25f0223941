"""Static SVG figures of logged runs: positions, swing angles, thrust and V(t)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simulate import ScenarioConfig, TrajectoryLog  # noqa: E402

plt.rcParams["svg.hashsalt"] = "dronebar"
_MAX_POINTS = 4000
_STYLES = {"proposed": dict(color="tab:blue", ls="-"), "pd": dict(color="tab:red", ls="-.")}
FIGURES = ("positions", "swing_angles", "control_inputs", "lyapunov")


def _thin(log: TrajectoryLog):
    stride = max(1, len(log) // _MAX_POINTS)
    return slice(None, None, stride)


def _style(label: str) -> dict:
    return _STYLES.get(label, {})


def _desired(cfg: ScenarioConfig, t: np.ndarray) -> np.ndarray:
    times = np.array([s.t for s in cfg.setpoints])
    idx = np.clip(np.searchsorted(times, t + 1e-9, side="right") - 1, 0, len(times) - 1)
    table = np.array([[s.setpoint.y1d, s.setpoint.z1d, s.setpoint.y2d, s.setpoint.z2d] for s in cfg.setpoints])
    return table[idx]


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_positions(logs: dict, cfg: ScenarioConfig, path: Path) -> Path:
    fig, axes = plt.subplots(2, 2, figsize=(9, 5.5), sharex=True)
    names = (("y1", 0), ("z1", 1), ("y2", 2), ("z2", 3))
    ref_t = None
    for label, log in logs.items():
        s = _thin(log)
        for ax, (name, j) in zip(axes.flat, names):
            ax.plot(log.t[s], log.xi[s, j], label=label, lw=1.2, **_style(label))
        if ref_t is None:
            ref_t = log.t[s]
    if ref_t is not None:
        des = _desired(cfg, ref_t)
        for ax, (name, j) in zip(axes.flat, names):
            ax.plot(ref_t, des[:, j], "k--", lw=0.9, label="desired")
            ax.set_ylabel(f"{name} (m)")
    for ax in axes[-1]:
        ax.set_xlabel("t (s)")
    axes[0, 0].legend(fontsize=8)
    return _save(fig, path)


def plot_swing_angles(logs: dict, cfg: ScenarioConfig, path: Path) -> Path:
    fig, axes = plt.subplots(3, 1, figsize=(8, 6), sharex=True)
    for label, log in logs.items():
        s = _thin(log)
        for j, ax in enumerate(axes):
            ax.plot(log.t[s], np.degrees(log.q[s, 2 + j]), label=label, lw=1.2, **_style(label))
    for j, ax in enumerate(axes):
        ax.set_ylabel(f"theta{j + 1} (deg)")
        ax.axhline(0.0, color="k", lw=0.5)
    axes[-1].set_xlabel("t (s)")
    axes[0].legend(fontsize=8)
    return _save(fig, path)


def plot_control_inputs(logs: dict, cfg: ScenarioConfig, path: Path) -> Path:
    fig, axes = plt.subplots(2, 2, figsize=(9, 5.5), sharex=True)
    titles = ("f1 sin(phi1)", "f1 cos(phi1)", "f2 sin(phi2)", "f2 cos(phi2)")
    for label, log in logs.items():
        s = _thin(log)
        for j, ax in enumerate(axes.flat):
            ax.plot(log.t[s], log.u[s, j], label=label, lw=1.2, **_style(label))
    for j, ax in enumerate(axes.flat):
        ax.set_ylabel(f"{titles[j]} (N)")
    for ax in axes[-1]:
        ax.set_xlabel("t (s)")
    axes[0, 0].legend(fontsize=8)
    return _save(fig, path)


def plot_lyapunov(logs: dict, cfg: ScenarioConfig, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for label, log in logs.items():
        s = _thin(log)
        ax.plot(log.t[s], log.V[s], label=f"{label} V", lw=1.2, **_style(label))
        ax.plot(log.t[s], log.E[s], label=f"{label} E", lw=0.8, alpha=0.6, color="0.4")
    for kind, lo, hi in next(iter(logs.values())).events if logs else []:
        ax.axvspan(lo, hi, color="orange" if kind == "wind" else "green", alpha=0.12)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("J")
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def write_figures(logs: dict, cfg: ScenarioConfig, out_dir: Path, prefix: str = "") -> dict:
    """Write all four figures; returns ``{figure name: path}``."""
    out_dir = Path(out_dir)
    fns = (plot_positions, plot_swing_angles, plot_control_inputs, plot_lyapunov)
    return {
        name: str(fn(logs, cfg, out_dir / f"{prefix}{name}.svg"))
        for name, fn in zip(FIGURES, fns)
    }
