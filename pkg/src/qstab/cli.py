"""Command-line driver: ``qstab {synthesize,run,sweep,selftest}``.

Exit codes: 0 all monitors pass, 1 some monitor failed, 2 configuration,
hypothesis or synthesis error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .plants import PlantModel, plant_from_description
from .selftest import format_report, run_selftest
from .simulator import (
    HypothesisViolation,
    SimulationAborted,
    Trajectory,
    boundary_points,
    run_quantized,
    run_ternary,
)
from .synthesis import SynthesisError, SynthesisResult, synthesize

log = logging.getLogger("qstab")

EXIT_OK, EXIT_MONITOR, EXIT_ERROR = 0, 1, 2
SAMPLE_COLUMNS = "t, x0..x{n-1}, zeta, u, W"
EVENT_COLUMNS = "t, old, new, guard"


class UsageError(Exception):
    pass


def build_plant(cfg: ExperimentConfig) -> PlantModel:
    lp = cfg.lyapunov
    try:
        return plant_from_description(cfg.plant, c=lp.c, d=lp.d, sigma=lp.sigma)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"plant: {exc}") from exc


def synthesize_for(cfg: ExperimentConfig, plant: PlantModel) -> SynthesisResult:
    ctl = cfg.controller
    # the ternary constants do not depend on delta; any admissible value works
    delta = ctl.delta if ctl.delta is not None else 0.5
    return synthesize(plant, delta, cfg.grid, ctl.gain_margin, ctl.level_margin)


def cases(cfg: ExperimentConfig, plant: PlantModel) -> list[tuple[np.ndarray, float, np.ndarray]]:
    starts = list(boundary_points(plant, cfg.sweep.boundary_points)) if cfg.sweep.boundary_points else []
    starts += [(np.asarray(x, dtype=float), float(z)) for x, z in cfg.sweep.points]
    mus = [np.asarray(m, dtype=float) for m in cfg.sweep.mu] or [plant.param_box.mean(axis=1)]
    return [(x, z, m) for x, z in starts for m in mus]


def simulate_case(cfg: ExperimentConfig, plant: PlantModel, synth: SynthesisResult,
                  x0, zeta0, mu, horizon: float | None = None) -> Trajectory:
    ctl = cfg.controller
    T = cfg.horizon if horizon is None else horizon
    if ctl.kind == "hysteretic-quantized":
        return run_quantized(plant, synth, x0, zeta0, mu, T, step=ctl.step)
    if ctl.kind == "ternary":
        return run_ternary(plant, synth, x0, zeta0, mu, T, step=ctl.step, kbar=ctl.kbar)
    raise UsageError("the static quantizer has no unique solution to simulate; "
                     "use hysteretic-quantized (its Krasowskii set is monitored along those runs)")


# --- output ---------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v))


def write_synthesis(path: Path, synth: SynthesisResult, config_hash: str) -> None:
    path.mkdir(parents=True, exist_ok=True)
    data = synth.to_dict()
    data["config_hash"] = config_hash
    (path / "synthesis.json").write_text(json.dumps(data, indent=2) + "\n")
    lines = [f"config_hash  {config_hash}"]
    lines += [f"{name:22s} = {value!r:24}  # {formula}" for name, formula, value in synth.trace]
    lines += [f"{'k_star':22s} = {synth.k_star!r}", f"{'j_star':22s} = {synth.j_star!r}",
              f"{'u0':22s} = {synth.u0!r}", f"{'kbar':22s} = {synth.kbar!r}", f"{'j':22s} = {synth.j!r}"]
    (path / "synthesis.txt").write_text("\n".join(lines) + "\n")


def load_synthesis(path: Path, config_hash: str) -> SynthesisResult:
    data = json.loads(Path(path).read_text())
    found = data.pop("config_hash", None)
    if found != config_hash:
        raise ConfigError(f"synthesis file {path} was produced for config {found}, not {config_hash}")
    return SynthesisResult.from_dict(data)


def monitors_dict(traj: Trajectory) -> dict:
    return {
        "kind": traj.kind,
        "passed": traj.passed,
        "mu": traj.mu.tolist(),
        "x0": traj.x[0].tolist(),
        "zeta0": float(traj.zeta[0]),
        "horizon": traj.horizon,
        "step": traj.step,
        "t_tol": traj.t_tol,
        "events": len(traj.events),
        "entered_sigma_at": traj.entered_sigma_at,
        "min_dwell": None if math.isinf(traj.min_dwell) else traj.min_dwell,
        "rav_final": traj.rav_final,
        "bits_per_switch": traj.bits_per_switch,
        "switching_ceased_at": traj.switching_ceased_at,
        "monitors": [
            {"name": m.name, "checked": m.checked, "failed": m.failed, "worst": m.worst,
             "bound": m.bound, "passed": m.passed}
            for m in traj.monitors
        ],
    }


def write_run(path: Path, traj: Trajectory, synth_file: Path, stride: int = 1) -> dict:
    path.mkdir(parents=True, exist_ok=True)
    idx = np.arange(0, len(traj.t), max(1, stride))
    if idx[-1] != len(traj.t) - 1:
        idx = np.append(idx, len(traj.t) - 1)
    n = traj.x.shape[1]
    header = ",".join(["t"] + [f"x{i}" for i in range(n)] + ["zeta", "u", "W"])
    table = np.column_stack([traj.t[idx], traj.x[idx], traj.zeta[idx], traj.u[idx], traj.W[idx]])
    np.savetxt(path / "samples.csv", table, delimiter=",", header=header, comments="", fmt="%.17g")
    with open(path / "events.csv", "w") as fh:
        fh.write("t,old,new,guard\n")
        for e in traj.events:
            fh.write(f"{_fmt(e.time)},{_fmt(e.old_value)},{_fmt(e.new_value)},{e.trigger}\n")
    report = monitors_dict(traj)
    (path / "monitors.json").write_text(json.dumps(report, indent=2) + "\n")
    (path / "synthesis.json").write_text(Path(synth_file).read_text())
    return report


def summarize(reports: list[dict]) -> dict:
    finite = [r["min_dwell"] for r in reports if r["min_dwell"] is not None]
    entered = [r["entered_sigma_at"] for r in reports]
    ceased = [r["switching_ceased_at"] for r in reports]
    return {
        "runs": len(reports),
        "passed": sum(r["passed"] for r in reports),
        "min_dwell": min(finite) if finite else None,
        "max_rav": max(r["rav_final"] for r in reports),
        "max_T": None if any(e is None for e in entered) else max(entered),
        "switching_ceased_at": None if any(c is None for c in ceased) else max(ceased),
    }


def format_summary(s: dict) -> str:
    lines = [f"runs passed      {s['passed']}/{s['runs']}",
             f"min dwell        {s['min_dwell']}",
             f"max R_av         {s['max_rav']}",
             f"max T            {s['max_T']}"]
    if s["switching_ceased_at"] is not None:
        lines.append(f"switching ceased at t = {s['switching_ceased_at']!r}")
    return "\n".join(lines)


# --- commands -------------------------------------------------------------------


def _prepare(args) -> tuple[ExperimentConfig, PlantModel]:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, grid=replace(cfg.grid, seed=args.seed))
    if getattr(args, "horizon", None) is not None:
        cfg = replace(cfg, horizon=args.horizon)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    return cfg, build_plant(cfg)


def _synthesis_file(args, cfg, plant, out: Path) -> tuple[SynthesisResult, Path]:
    h = cfg.synthesis_hash()
    if getattr(args, "synthesis", None):
        return load_synthesis(Path(args.synthesis), h), Path(args.synthesis)
    synth = synthesize_for(cfg, plant)
    write_synthesis(out, synth, h)
    return synth, out / "synthesis.json"


def cmd_synthesize(args) -> int:
    cfg, plant = _prepare(args)
    out = Path(cfg.out)
    synth = synthesize_for(cfg, plant)
    write_synthesis(out, synth, cfg.synthesis_hash())
    print((out / "synthesis.txt").read_text(), end="")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg, plant = _prepare(args)
    out = Path(cfg.out)
    synth, sfile = _synthesis_file(args, cfg, plant, out)
    all_cases = cases(cfg, plant)
    if args.x0 is not None or args.zeta0 is not None:
        x0 = np.asarray(args.x0 if args.x0 is not None else [0.0] * plant.dim_x, dtype=float)
        mu = np.asarray(args.mu, dtype=float) if args.mu is not None else all_cases[0][2]
        case = (x0, args.zeta0 or 0.0, mu)
    else:
        case = all_cases[args.index]
    traj = simulate_case(cfg, plant, synth, *case)
    report = write_run(out / "run", traj, sfile, args.sample_stride)
    for m in report["monitors"]:
        print(f"{'PASS' if m['passed'] else 'FAIL'}  {m['name']:30s} failed {m['failed']}/{m['checked']}")
    print(f"entered Omega_sigma at {report['entered_sigma_at']}, {report['events']} switches")
    return EXIT_OK if traj.passed else EXIT_MONITOR


def cmd_sweep(args) -> int:
    cfg, plant = _prepare(args)
    out = Path(cfg.out)
    synth, sfile = _synthesis_file(args, cfg, plant, out)
    reports = []
    for k, case in enumerate(cases(cfg, plant)):
        traj = simulate_case(cfg, plant, synth, *case)
        reports.append(write_run(out / f"run_{k:03d}", traj, sfile, args.sample_stride))
        log.info("run %d: passed=%s events=%d", k, traj.passed, len(traj.events))
    summary = summarize(reports)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(format_summary(summary))
    return EXIT_OK if summary["passed"] == summary["runs"] else EXIT_MONITOR


def cmd_selftest(args) -> int:
    checks = run_selftest(seed=args.seed or 0)
    print(format_report(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_MONITOR


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qstab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, horizon=True):
        p.add_argument("--config", help="YAML experiment config (defaults to the demo plant)")
        p.add_argument("--seed", type=int, help="sampling seed override")
        p.add_argument("--out", help="output directory override")
        if horizon:
            p.add_argument("--horizon", type=float, help="simulation horizon override")
            p.add_argument("--synthesis", help="reuse a synthesis.json produced for the same config")
            p.add_argument("--sample-stride", type=int, default=1,
                           help="write every k-th sample to samples.csv (monitors always see all)")

    p = sub.add_parser("synthesize", help="compute controller constants")
    common(p, horizon=False)
    p.set_defaults(func=cmd_synthesize)
    p = sub.add_parser("run", help="simulate one initial condition")
    common(p)
    p.add_argument("--index", type=int, default=0, help="which sweep case to run")
    p.add_argument("--x0", type=float, nargs="+")
    p.add_argument("--zeta0", type=float)
    p.add_argument("--mu", type=float, nargs="+")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="simulate every sweep case")
    common(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("selftest", help="property checks without simulation")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SynthesisError, HypothesisViolation, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SimulationAborted as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_MONITOR


if __name__ == "__main__":
    sys.exit(main())
