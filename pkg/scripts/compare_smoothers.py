#!/usr/bin/env python3
"""Compare open-loop smoother quality over the generated scenario corpus.

For each field style we generate the standard 20 reference paths, smooth
every path with the search-based smoother and the clamped B-spline, and
report deviation degree and curvature violations side by side.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from furrowplan.baseline import bspline_smooth, curvature_violation_ratio
from furrowplan.harness import FIELD_STYLES, SimulationConfig, deviation_degree, generate_field
from furrowplan.planner import PlanNotFound, plan_reference
from furrowplan.vehicle import VehicleParams


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--styles", nargs="*", default=list(FIELD_STYLES))
    args = ap.parse_args()

    params = VehicleParams()
    config = SimulationConfig().planner
    c_max = np.tan(params.max_steer) / params.wheelbase

    wins = 0
    total = 0
    t0 = time.perf_counter()
    for style in args.styles:
        scenario = generate_field(args.seed, style)
        for i, R in enumerate(scenario.reference_paths):
            try:
                hybrid = plan_reference(R, scenario.field, params, config)
            except PlanNotFound:
                print(f"{style:12s} path {i:2d}  hybrid: no plan")
                continue
            spline = bspline_smooth(R)
            dev_h = deviation_degree(hybrid, R)
            dev_b = deviation_degree(spline, R)
            viol_h = curvature_violation_ratio(hybrid, c_max + 1e-9)
            viol_b = curvature_violation_ratio(spline, c_max)
            total += 1
            wins += dev_h <= dev_b
            print(
                f"{style:12s} path {i:2d}  hybrid dev={dev_h:7.4f} viol={viol_h:.3f}"
                f"  bspline dev={dev_b:7.4f} viol={viol_b:.3f}"
            )
    dt = time.perf_counter() - t0
    print(f"\nhybrid <= bspline on {wins}/{total} paths ({dt:.1f} s)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
