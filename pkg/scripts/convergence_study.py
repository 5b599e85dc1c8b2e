#!/usr/bin/env python
"""Self-convergence of the indicator and the decomposition residual under
joint refinement of the radial grid and the time step (fixed lambda,
time-stepped route).

    python scripts/convergence_study.py --tau 15
"""

import argparse
import time

import numpy as np

from enclosure.asymptotics import LambdaSchedule, NumericsConfig, run_sweep
from enclosure.geometry import REFERENCE_GEOMETRY


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tau", type=float, default=15.0)
    ap.add_argument("--lam", type=float, default=1.0)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--levels", type=int, default=4)
    args = ap.parse_args()
    sch = LambdaSchedule.fixed(args.lam)
    n, dt = 201, 1e-3
    prev = prev_diff = None
    print(f"{'N':>5} {'dt':>9} {'indicator':>22} {'change':>9} {'order':>6} "
          f"{'identity':>9} {'first rep':>9} {'time':>6}")
    for _ in range(args.levels):
        num = NumericsConfig(radial_points=n, dt_max=dt, route="time")
        start = time.perf_counter()
        s = run_sweep(REFERENCE_GEOMETRY, args.T, sch, [args.tau], num).samples[0]
        diff = abs(s.indicator - prev) if prev is not None else np.nan
        order = np.log2(prev_diff / diff) if prev_diff is not None else np.nan
        print(f"{n:5d} {dt:9.2e} {s.indicator:22.15e} {diff:9.2e} {order:6.2f} "
              f"{s.relative_residual:9.2e} {abs(s.first_rep_residual):9.2e} "
              f"{time.perf_counter() - start:5.0f}s")
        prev, prev_diff = s.indicator, (diff if prev is not None else None)
        n, dt = 2 * n - 1, dt / 2


if __name__ == "__main__":
    main()
