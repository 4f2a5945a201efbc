"""Batch command-line entry point.

Subcommands: process (RINEX in, trajectory/slips/report out), simulate
(scenario in, RINEX + truth out), evaluate (trajectory vs truth, optional
residual table). Exit codes: 0 ok, 1 usage or input error, 2 estimation
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .evaluate import (
    EvaluationError,
    ate,
    dd_residual_series,
    read_trajectory_csv,
    write_dd_residuals_csv,
    write_slips_csv,
    write_trajectory_csv,
)
from .odometry import (
    METHODS,
    GraphBuildError,
    MethodConfig,
    Session,
    Trajectory,
    estimate_trajectory,
)
from .rinex import RinexError, parse_nav, parse_obs, write_nav, write_obs
from .sim import BUILTIN_SCENARIOS, ScenarioConfig, simulate
from .solver import SolverError
from .types import GnssError, SatId

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ESTIMATION = 2


def _fail(message: str, code: int = EXIT_USAGE) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_json(path: str) -> dict:
    with open(path) as f:
        return json.load(f)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_process(args: argparse.Namespace) -> int:
    for path in (args.obs, args.nav):
        if not Path(path).is_file():
            return _fail(f"no such file: {path}")
    if args.config and not Path(args.config).is_file():
        return _fail(f"no such file: {args.config}")
    try:
        cfg_dict = _load_json(args.config) if args.config else {}
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(f"bad config: {exc}")
    if args.method:
        cfg_dict["method"] = args.method
    try:
        config = MethodConfig.from_dict(cfg_dict)
    except (GnssError, TypeError) as exc:
        return _fail(f"bad config: {exc}")

    try:
        with open(args.obs) as f:
            obs = parse_obs(f)
        with open(args.nav) as f:
            nav = parse_nav(f)
    except (RinexError, OSError) as exc:
        return _fail(str(exc))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    session = Session(epochs=obs.epochs, store=nav.store, iono=nav.iono)
    try:
        result = estimate_trajectory(session, config)
    except (GraphBuildError, SolverError) as exc:
        return _fail(f"estimation failed: {exc}", EXIT_ESTIMATION)

    write_trajectory_csv(out / "trajectory.csv", result.trajectory)
    write_slips_csv(out / "slips.csv", result.slips)
    report = dict(result.report)
    report["parse"] = {"obs": obs.report.to_dict(), "nav": nav.report.to_dict()}
    _write_json(out / "report.json", report)
    print(f"{result.report['method']}: {len(result.trajectory)} epochs, "
          f"converged={result.converged}")
    return EXIT_OK if result.converged else EXIT_ESTIMATION


def cmd_simulate(args: argparse.Namespace) -> int:
    name = args.scenario
    if name in BUILTIN_SCENARIOS:
        cfg = BUILTIN_SCENARIOS[name]()
    elif Path(name).is_file():
        try:
            cfg = ScenarioConfig.from_dict(_load_json(name))
        except (json.JSONDecodeError, GnssError, TypeError, KeyError) as exc:
            return _fail(f"invalid scenario JSON: {exc}")
    else:
        return _fail(f"unknown scenario {name!r}; builtins: "
                     + ", ".join(sorted(BUILTIN_SCENARIOS)))
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        cfg.validate()
    except GnssError as exc:
        return _fail(str(exc))

    sim = simulate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "obs.rnx").write_text(write_obs(sim.epochs, sim.store.glonass_fcn()))
    (out / "nav.rnx").write_text(write_nav(sim.store.records(), sim.iono))
    truth = Trajectory(times=sim.truth.times, positions=sim.truth.positions)
    write_trajectory_csv(out / "truth.csv", truth)
    with open(out / "truth_slips.csv", "w") as f:
        f.write("tow,sat,cycles,cumulative\n")
        for sat, idx, cycles in sim.truth.events:
            cum = sim.truth.slips[sat][idx]
            f.write(f"{sim.truth.times[idx].tow:.3f},{sat},{cycles},{cum:.0f}\n")
    _write_json(out / "scenario.json", cfg.to_dict())
    print(f"simulated {cfg.name}: {len(sim.epochs)} epochs, "
          f"{len(cfg.satellites)} satellites, seed {cfg.seed}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    for path in (args.traj, args.truth):
        if not Path(path).is_file():
            return _fail(f"no such file: {path}")
    if args.residuals and not (args.ref_sat and args.obs and args.nav):
        return _fail("--residuals requires --ref-sat, --obs and --nav")
    try:
        traj = read_trajectory_csv(args.traj)
        truth = read_trajectory_csv(args.truth)
        report = ate(traj, truth)
    except EvaluationError as exc:
        return _fail(str(exc))
    payload = report.to_dict()
    print(json.dumps(payload, indent=2, sort_keys=True))
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "ate.json", payload)

    if args.residuals:
        try:
            with open(args.obs) as f:
                obs = parse_obs(f)
            with open(args.nav) as f:
                nav = parse_nav(f)
            ref = SatId.from_str(args.ref_sat)
            static_pos = np.mean(truth.positions, axis=0)
            rows = dd_residual_series(
                obs.epochs, nav.store, nav.iono, ref,
                offsets=range(1, int(args.max_dt) + 1), static_pos=static_pos,
                apply_atmosphere=not args.no_atmosphere)
        except (RinexError, GnssError, OSError) as exc:
            return _fail(str(exc))
        target = (out or Path(".")) / "dd_residuals.csv"
        write_dd_residuals_csv(target, rows)
        print(f"wrote {len(rows)} residual rows to {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnssodom",
        description="GNSS carrier-phase odometry with explicit cycle-slip estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process", help="estimate a trajectory from RINEX files")
    p.add_argument("--obs", required=True, help="RINEX observation file")
    p.add_argument("--nav", required=True, help="RINEX navigation file")
    p.add_argument("--method", choices=METHODS, default=None)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("simulate", help="generate synthetic RINEX + ground truth")
    p.add_argument("--scenario", required=True,
                   help="builtin name or scenario JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="compare a trajectory against truth")
    p.add_argument("--traj", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--residuals", action="store_true",
                   help="also write the TDCP residual-vs-offset table")
    p.add_argument("--ref-sat", default=None)
    p.add_argument("--obs", default=None)
    p.add_argument("--nav", default=None)
    p.add_argument("--max-dt", type=float, default=60.0)
    p.add_argument("--no-atmosphere", action="store_true")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GnssError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
