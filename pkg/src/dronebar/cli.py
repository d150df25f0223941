"""Command-line entry point.

Subcommands::

    dronebar simulate --config exp1_test1 --out runs/a
    dronebar compare  --config exp1_test1 --out runs/b
    dronebar verify   all --out runs/c --seed 3

Exit codes: 0 success, 1 usage or configuration error, 2 simulation fault,
3 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path


from . import __version__
from . import simulate as sim
from . import verify
from .errors import ConfigurationFault

EXIT_OK, EXIT_USAGE, EXIT_FAULT, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    command: str
    config: dict | None
    version: str = __version__
    started: str = ""
    wall_clock_s: float = 0.0
    outputs: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        self.outputs["manifest"] = str(path)
        path.write_text(json.dumps(verify._jsonable(dataclasses.asdict(self)), indent=2) + "\n")
        return path


def _resolve_config(args) -> sim.ScenarioConfig:
    cfg = sim.load_scenario(args.config)
    changes = {}
    if getattr(args, "controller", None):
        changes["controller"] = args.controller
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "duration", None) is not None:
        changes["duration"] = args.duration
    if changes:
        try:
            cfg = dataclasses.replace(cfg, **changes)
        except ValueError as exc:
            raise ConfigurationFault(str(exc)) from None
    return cfg


def _write_log(log: sim.TrajectoryLog, out_dir: Path, stem: str, fmt: str) -> str:
    if fmt == "csv":
        path = out_dir / f"{stem}.csv"
        sim.write_csv(log, path)
    else:
        path = out_dir / f"{stem}.json"
        cols = dict(zip(sim.CSV_COLUMNS, zip(*log.rows()))) if len(log) else {c: [] for c in sim.CSV_COLUMNS}
        path.write_text(json.dumps(verify._jsonable({k: list(v) for k, v in cols.items()})) + "\n")
    return str(path)


def _write_json(path: Path, obj) -> str:
    path.write_text(json.dumps(verify._jsonable(obj), indent=2) + "\n")
    return str(path)


def _fault_summary(log: sim.TrajectoryLog):
    if log.fault is None:
        return None
    return {"kind": log.fault.kind, "message": log.fault.message, "t": log.fault.t, "state": log.fault.state}


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    cfg = _resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = sim.run(cfg)
    man = RunManifest("simulate", cfg.to_dict(), started=started)
    man.outputs["trajectory"] = _write_log(log, out, "trajectory", args.format)
    metrics = sim.compute_metrics(log)
    man.outputs["metrics"] = _write_json(out / "metrics.json", metrics.to_dict())
    audit = verify.closed_loop_audit(log, cfg.gains)
    man.outputs["audit"] = _write_json(out / "audit.json", audit.to_dict())
    from . import plotting

    man.outputs.update(plotting.write_figures({cfg.controller: log}, cfg, out))
    man.summary = {
        "completed": log.ok,
        "fault": _fault_summary(log),
        "steps": len(log) - 1,
        "settling_overall": metrics.settling_overall,
        "max_ey_sq": metrics.max_ey_sq,
        "audit_passed": audit.passed,
    }
    man.wall_clock_s = time.perf_counter() - t0
    man.write(out)
    print(f"{cfg.name} [{cfg.controller}]: {len(log) - 1} steps, settling {_fmt(metrics.settling_overall)}, "
          f"max e_y^2 {metrics.max_ey_sq:.4g}, audit {'pass' if audit.passed else 'FAIL'}")
    if not log.ok:
        print(f"simulation fault: {log.fault.message}", file=sys.stderr)
        return EXIT_FAULT
    return EXIT_OK


def _fmt(v) -> str:
    return "unsettled" if v is None else f"{v:.3f} s"


def settling_ratio(a: float | None, b: float | None) -> float | None:
    """``a / b`` for settling times; ``None`` if either run is unsettled."""
    if a is None or b is None:
        return None
    if b == 0.0:
        return 1.0 if a == 0.0 else math.inf
    return a / b


def cmd_compare(args) -> int:
    t0 = time.perf_counter()
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    base = _resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgs = {c: base.with_controller(c) for c in ("proposed", "pd")}
    logs = {c: sim.run(cfg) for c, cfg in cfgs.items()}
    mets = {c: sim.compute_metrics(log) for c, log in logs.items()}

    man = RunManifest("compare", base.to_dict(), started=started)
    for c, log in logs.items():
        man.outputs[f"trajectory_{c}"] = _write_log(log, out, f"trajectory_{c}", args.format)
        man.outputs[f"metrics_{c}"] = _write_json(out / f"metrics_{c}.json", mets[c].to_dict())

    table = {}
    for ch in sim.CHANNELS:
        a, b = mets["proposed"].settling_time[ch], mets["pd"].settling_time[ch]
        table[ch] = {"proposed": a, "pd": b, "ratio": settling_ratio(a, b)}
    overall = settling_ratio(mets["proposed"].settling_overall, mets["pd"].settling_overall)
    table["overall"] = {
        "proposed": mets["proposed"].settling_overall,
        "pd": mets["pd"].settling_overall,
        "ratio": overall,
    }
    recovery = {c: m.recovery_times for c, m in mets.items()}
    comparison = {"settling": table, "recovery": recovery,
                  "faults": {c: _fault_summary(log) for c, log in logs.items()}}
    man.outputs["comparison"] = _write_json(out / "comparison.json", comparison)
    from . import plotting

    man.outputs.update(plotting.write_figures(logs, base, out))
    man.summary = {"settling_ratio": overall, "faults": comparison["faults"]}
    man.wall_clock_s = time.perf_counter() - t0
    man.write(out)

    print(f"{base.name}: settling time proposed / PD")
    print(f"  {'channel':8s} {'proposed':>10s} {'pd':>10s} {'ratio':>8s}")
    for ch, row in table.items():
        r = "n/a" if row["ratio"] is None else f"{row['ratio']:.4f}"
        print(f"  {ch:8s} {_fmt(row['proposed']):>10s} {_fmt(row['pd']):>10s} {r:>8s}")
    if any(recovery.values()):
        print("recovery after each pulse (s):")
        for c, rows in recovery.items():
            vals = ", ".join(_fmt(r["recovery"]) for r in rows)
            print(f"  {c:8s} {vals}")
    if any(not log.ok for log in logs.values()):
        return EXIT_FAULT
    return EXIT_OK


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = verify.run_suite(args.suite, seed=args.seed, samples=args.samples)
    man = RunManifest("verify", None, started=started)
    man.outputs["report"] = _write_json(out / "report.json", report.to_dict())
    lines = report.summary_lines()
    summary = out / "summary.txt"
    summary.write_text("\n".join(lines) + "\n")
    man.outputs["summary"] = str(summary)
    man.summary = {"suite": args.suite, "passed": report.passed, "seed": args.seed,
                   "offending": report.offending}
    man.wall_clock_s = time.perf_counter() - t0
    man.write(out)
    print("\n".join(lines))
    return EXIT_OK if report.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dronebar", description="Two-drone cable-suspended bar simulator and audits.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, need_config=True):
        p.add_argument("--config", required=need_config,
                       help="scenario JSON path or shipped scenario name (e.g. exp1_test1)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--dt", type=float, help="override the integration step (s)")
        p.add_argument("--duration", type=float, help="override the simulated duration (s)")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized sampling")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="trajectory export format")

    s = sub.add_parser("simulate", help="run one scenario")
    common(s)
    s.add_argument("--controller", choices=("proposed", "pd"))
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="run proposed and PD on the same scenario")
    common(c)
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("verify", help="run numerical audits")
    v.add_argument("suite", choices=verify.SUITES)
    v.add_argument("--out", required=True)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--samples", type=int, default=10_000, help="random samples for sampled checks")
    v.add_argument("--format", choices=("csv", "json"), default="json",
                   help="accepted for symmetry; reports are always JSON")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationFault as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
