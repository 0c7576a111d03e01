#!/usr/bin/env python3
"""Single closed-loop run with artifact output.

Generates a synthetic field, optionally drops random obstacles on the chosen
path, simulates the sense-replan-track loop and writes the trace CSV plus
the report JSON into the output directory.
"""
from __future__ import annotations

import argparse
from dataclasses import replace
from pathlib import Path

from furrowplan.harness import (
    SimulationConfig,
    generate_field,
    random_obstacle_trial,
    simulate_closed_loop,
    write_report,
    write_trace,
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--style", default="rectangular")
    ap.add_argument("--path-index", type=int, default=2)
    ap.add_argument("--method", default="hybrid", choices=["hybrid", "bspline", "raw"])
    ap.add_argument("--obstacles", type=int, default=0)
    ap.add_argument("--output-dir", default="out")
    args = ap.parse_args()

    scenario = generate_field(args.seed, args.style)
    config = replace(SimulationConfig(), collect_timing=True)
    if args.obstacles > 0:
        report, trace = random_obstacle_trial(
            scenario, args.path_index, args.obstacles, args.seed, config
        )
    else:
        report, trace = simulate_closed_loop(scenario, args.path_index, args.method, config)

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"demo_{args.style}_p{args.path_index}_s{args.seed}"
    write_trace(trace, out / f"{stem}.csv")
    write_report(report, out / f"{stem}.json")

    verdict = "success" if report.success else f"failure ({report.failure_cause})"
    print(f"{verdict}  deviation={report.deviation_degree}  replans={report.replan_count}")
    print(f"artifacts in {out}/")
    return 0 if report.success else 1


if __name__ == "__main__":
    raise SystemExit(main())
