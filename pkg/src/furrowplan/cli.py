"""Command-line entry point: smoothing, simulation and benchmark runs.

Exit codes: 0 success, 2 input error, 3 plan not found, 4 internal error.
Every report embeds the ``--set`` overrides verbatim for provenance, and all
artifacts land under ``--output-dir``.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

import jsonschema

from .baseline import bspline_smooth, curvature_violation_ratio
from .harness import (
    FIELD_STYLES,
    RunReport,
    Scenario,
    SimulationConfig,
    SMOOTHERS,
    TraceRow,
    deviation_degree,
    generate_field,
    random_obstacle_trial,
    raw_trajectory,
    scenario_from_dict,
    scenario_to_dict,
    simulate_closed_loop,
    write_report,
    write_trace,
)
from .planner import PlanNotFound, PlannerConfig, plan_reference
from .replanner import ReplannerConfig
from .tracker import MpcConfig
from .trajectory import Trajectory


class CliError(Exception):
    """Input problem; carries the process exit code."""

    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def _load_schema(name: str) -> dict:
    with resources.files("furrowplan.schemas").joinpath(name).open() as fh:
        return json.load(fh)


def validate_report_dict(data: dict) -> None:
    jsonschema.validate(data, _load_schema("report.schema.json"))


# --- config overrides ----------------------------------------------------------

_CONFIG_SECTIONS = ("planner", "mpc", "replanner", "sim")


def _cast_like(value: str, default):
    if isinstance(default, bool):
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float) or default is None:
        return float(value)
    if isinstance(default, tuple):
        parts = [float(p) for p in value.split(",")]
        if len(parts) != len(default):
            raise ValueError(f"expected {len(default)} comma-separated values")
        return tuple(parts)
    raise ValueError(f"cannot override field of type {type(default).__name__}")


def apply_overrides(pairs: List[str], config: SimulationConfig) -> Tuple[SimulationConfig, dict]:
    """Apply dotted-key overrides; unknown keys raise CliError (exit 2)."""
    sections = {
        "planner": config.planner,
        "mpc": config.mpc,
        "replanner": config.replanner,
        "sim": config,
    }
    logged = {}
    for pair in pairs:
        if "=" not in pair:
            raise CliError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        parts = key.split(".")
        if len(parts) != 2 or parts[0] not in _CONFIG_SECTIONS:
            raise CliError(
                f"override key {key!r} must be one of "
                + ", ".join(f"{s}.<field>" for s in _CONFIG_SECTIONS)
            )
        section, name = parts
        target = sections[section]
        if name not in {f.name for f in dataclasses.fields(target)}:
            raise CliError(f"unknown override field {key!r}")
        if section == "sim" and name in ("planner", "mpc", "replanner"):
            raise CliError(f"override field {key!r} is not scalar")
        try:
            cast = _cast_like(value, getattr(target, name))
        except ValueError as err:
            raise CliError(f"override {key!r}: {err}") from err
        sections[section] = dataclasses.replace(target, **{name: cast})
        logged[key] = value
    config = sections["sim"]
    config = dataclasses.replace(
        config,
        planner=sections["planner"],
        mpc=sections["mpc"],
        replanner=sections["replanner"],
    )
    return config, logged


# --- scenario input ------------------------------------------------------------


def resolve_scenario(spec: str) -> Scenario:
    """Load a scenario JSON file, or generate one from 'style:seed'."""
    path = Path(spec)
    if path.exists():
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as err:
            raise CliError(f"scenario {spec}: invalid JSON ({err})") from err
        try:
            jsonschema.validate(data, _load_schema("scenario.schema.json"))
        except jsonschema.ValidationError as err:
            raise CliError(f"scenario {spec}: {err.message}") from err
        return scenario_from_dict(data)
    if ":" in spec:
        style, _, seed_s = spec.partition(":")
        if style in FIELD_STYLES:
            try:
                return generate_field(int(seed_s), style)
            except ValueError as err:
                raise CliError(f"scenario {spec}: {err}") from err
    raise CliError(
        f"scenario {spec!r} is neither a file nor one of "
        + ", ".join(f"{s}:<seed>" for s in FIELD_STYLES)
    )


# --- smooth -----------------------------------------------------------------------


def _trajectory_trace(traj: Trajectory, wheelbase: float) -> List[TraceRow]:
    rows = []
    v = traj.states[:, 3]
    accel = np.diff(v) / traj.dt
    for n in range(traj.num_states):
        rows.append(
            TraceRow(
                t=n * traj.dt,
                x=float(traj.states[n, 0]),
                y=float(traj.states[n, 1]),
                theta=float(traj.states[n, 2]),
                v=float(v[n]),
                delta=float(math.atan(traj.curvatures[n] * wheelbase)),
                a=float(accel[n]) if n < len(accel) else 0.0,
                mode="plan",
                g_min=float("nan"),
            )
        )
    return rows


def cmd_smooth(args, out_dir: Path) -> int:
    scenario = resolve_scenario(args.scenario)
    config, overrides = apply_overrides(args.set or [], SimulationConfig())
    if not 0 <= args.path_index < len(scenario.reference_paths):
        raise CliError(f"path index {args.path_index} out of range")
    R = scenario.reference_paths[args.path_index]
    params = scenario.vehicle
    if args.method == "hybrid":
        traj = plan_reference(R, scenario.field, [], params, config.planner)
    elif args.method == "bspline":
        traj = bspline_smooth(R, v_r=config.planner.v_r, dt=config.planner.dt)
    else:
        traj = raw_trajectory(R, config.planner.v_r, config.planner.dt)
    stem = f"smooth_{args.method}_p{args.path_index}"
    write_trace(_trajectory_trace(traj, params.wheelbase), out_dir / f"{stem}.csv")
    metrics = {
        "method": args.method,
        "path_index": args.path_index,
        "deviation_degree": deviation_degree(traj, R),
        "curvature_violation_ratio": curvature_violation_ratio(traj, params.max_curvature),
        "path_length": traj.path_length,
        "num_states": traj.num_states,
        "overrides": overrides,
    }
    with open(out_dir / f"{stem}.json", "w") as fh:
        json.dump(metrics, fh, sort_keys=True)
        fh.write("\n")
    print(json.dumps(metrics, sort_keys=True))
    return 0


# --- simulate ----------------------------------------------------------------------


def _finish_report(report: RunReport, overrides: dict) -> RunReport:
    report.overrides = dict(overrides)
    validate_report_dict(report.to_dict())
    return report


def _trial_worker(payload: dict) -> dict:
    scenario = scenario_from_dict(payload["scenario"])
    config, overrides = apply_overrides(payload["set"], SimulationConfig())
    report, _ = random_obstacle_trial(
        scenario, payload["path_index"], payload["n_obstacles"], payload["seed"], config
    )
    report = _finish_report(report, overrides)
    return report.to_dict()


def cmd_simulate(args, out_dir: Path) -> int:
    scenario = resolve_scenario(args.scenario)
    config, overrides = apply_overrides(args.set or [], SimulationConfig())
    if not 0 <= args.path_index < len(scenario.reference_paths):
        raise CliError(f"path index {args.path_index} out of range")

    if args.trials > 1 or args.obstacles > 0:
        payloads = [
            {
                "scenario": scenario_to_dict(scenario),
                "path_index": args.path_index,
                "n_obstacles": args.obstacles,
                "seed": args.seed + i,
                "set": args.set or [],
            }
            for i in range(args.trials)
        ]
        if args.parallel > 1:
            with ProcessPoolExecutor(max_workers=args.parallel) as pool:
                results = list(pool.map(_trial_worker, payloads))
        else:
            results = [_trial_worker(p) for p in payloads]
        results.sort(key=lambda r: r["seed"])
        replan_means = [
            float(np.mean(r["replan_times_s"]))
            for r in results
            if r.get("replan_times_s")
        ]
        ctrl_means = [
            r["control_time_mean_s"]
            for r in results
            if r.get("control_time_mean_s") is not None
        ]
        aggregate = {
            "n_obstacles": args.obstacles,
            "trials": args.trials,
            "success_ratio": float(np.mean([r["success"] for r in results])),
            "mean_replan_time_s": float(np.mean(replan_means)) if replan_means else None,
            "mean_control_time_s": float(np.mean(ctrl_means)) if ctrl_means else None,
            "overrides": overrides,
            "reports": results,
        }
        out = out_dir / f"simulate_o{args.obstacles}_t{args.trials}_s{args.seed}.json"
        with open(out, "w") as fh:
            json.dump(aggregate, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(
            f"obstacles={args.obstacles} trials={args.trials} "
            f"success_ratio={aggregate['success_ratio']:.3f}"
        )
        return 0

    report, trace = simulate_closed_loop(scenario, args.path_index, args.method, config)
    report = _finish_report(report, overrides)
    stem = f"simulate_{args.method}_p{args.path_index}_s{args.seed}"
    write_report(report, out_dir / f"{stem}.json")
    write_trace(trace, out_dir / f"{stem}.csv")
    print(json.dumps({"success": report.success, "failure_cause": report.failure_cause}))
    return 0


# --- bench -------------------------------------------------------------------------


def cmd_bench(args, out_dir: Path) -> int:
    config, overrides = apply_overrides(args.set or [], SimulationConfig())
    scenes = []
    for style in FIELD_STYLES:
        scenario = generate_field(args.seed, style)
        rows = []
        for idx, R in enumerate(scenario.reference_paths):
            entry = {"path_index": idx}
            try:
                hybrid = plan_reference(R, scenario.field, [], scenario.vehicle, config.planner)
                entry["hybrid_deviation"] = deviation_degree(hybrid, R)
                entry["hybrid_violation_ratio"] = curvature_violation_ratio(
                    hybrid, scenario.vehicle.max_curvature
                )
            except PlanNotFound:
                entry["hybrid_deviation"] = None
                entry["hybrid_violation_ratio"] = None
            spline = bspline_smooth(R, v_r=config.planner.v_r, dt=config.planner.dt)
            entry["bspline_deviation"] = deviation_degree(spline, R)
            entry["bspline_violation_ratio"] = curvature_violation_ratio(
                spline, scenario.vehicle.max_curvature
            )
            if args.closed_loop:
                report, _ = simulate_closed_loop(scenario, idx, "hybrid", config)
                entry["closed_loop_success"] = report.success
            rows.append(entry)
        hybrid_devs = [r["hybrid_deviation"] for r in rows if r["hybrid_deviation"] is not None]
        scenes.append(
            {
                "style": style,
                "seed": args.seed,
                "paths": rows,
                "hybrid_deviation_mean": float(np.mean(hybrid_devs)) if hybrid_devs else None,
                "bspline_deviation_mean": float(np.mean([r["bspline_deviation"] for r in rows])),
            }
        )
        print(f"scene {style}: {len(rows)} paths")
    out = out_dir / f"bench_s{args.seed}.json"
    with open(out, "w") as fh:
        json.dump({"scenes": scenes, "overrides": overrides}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


# --- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="furrowplan",
        description="Smooth polyline references and track them with hierarchical MPC.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output-dir", default="out", help="artifact directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override, e.g. planner.beta=0.1")

    p_smooth = sub.add_parser("smooth", help="smooth one reference path")
    common(p_smooth)
    p_smooth.add_argument("--scenario", required=True)
    p_smooth.add_argument("--path-index", type=int, default=0)
    p_smooth.add_argument("--method", choices=SMOOTHERS, default="hybrid")

    p_sim = sub.add_parser("simulate", help="closed-loop tracking simulation")
    common(p_sim)
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--path-index", type=int, default=0)
    p_sim.add_argument("--method", choices=SMOOTHERS, default="hybrid")
    p_sim.add_argument("--obstacles", type=int, default=0)
    p_sim.add_argument("--trials", type=int, default=1)
    p_sim.add_argument("--parallel", type=int, default=1)

    p_bench = sub.add_parser("bench", help="smoothing benchmark over generated scenes")
    common(p_bench)
    p_bench.add_argument("--closed-loop", action="store_true",
                         help="also run closed-loop tracking per path")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "smooth":
            return cmd_smooth(args, out_dir)
        if args.command == "simulate":
            return cmd_simulate(args, out_dir)
        return cmd_bench(args, out_dir)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except PlanNotFound as err:
        print(f"plan not found: {err}", file=sys.stderr)
        return 3
    except Exception as err:  # pragma: no cover - defensive
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
