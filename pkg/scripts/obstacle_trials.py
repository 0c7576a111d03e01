#!/usr/bin/env python3
"""Run closed-loop obstacle-avoidance trials and summarise success rates.

Each trial drops a fixed number of random rectangular obstacles on a
randomly chosen reference path, then simulates the full sense-replan-track
loop. Timing statistics are collected so the cost of replanning can be
compared across obstacle counts.
"""
from __future__ import annotations

import argparse
from dataclasses import replace

import numpy as np

from furrowplan.harness import SimulationConfig, generate_field, random_obstacle_trial


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--style", default="rectangular")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--counts", type=int, nargs="*", default=[1, 2, 3])
    args = ap.parse_args()

    scenario = generate_field(args.seed, args.style)
    config = replace(SimulationConfig(), collect_timing=True)
    n_paths = len(scenario.reference_paths)

    for count in args.counts:
        successes = 0
        replan_times: list[float] = []
        control_means: list[float] = []
        for trial in range(args.trials):
            report, _ = random_obstacle_trial(
                scenario, trial % n_paths, count, args.seed + trial, config
            )
            successes += report.success
            if report.replan_times_s:
                replan_times.extend(report.replan_times_s)
            if report.control_time_mean_s is not None:
                control_means.append(report.control_time_mean_s)
        rate = successes / args.trials
        mean_replan = float(np.mean(replan_times)) if replan_times else float("nan")
        mean_control = float(np.mean(control_means)) if control_means else float("nan")
        print(
            f"obstacles={count}  success={rate:6.1%}"
            f"  mean replan={mean_replan:7.3f} s  mean control={mean_control * 1e3:6.1f} ms"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
