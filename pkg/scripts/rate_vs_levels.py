"""Measured average bit rate against the worst-case bound as levels are added.

Each extra level (``level_margin``) shrinks the deadzone by a factor rho and
costs two more quantizer nodes per sign.  Prints one row per setting.

    python3 scripts/rate_vs_levels.py --margins 0 1 2 4 --delta 0.2 0.333 0.5
"""
import argparse
import time

import numpy as np

from qstab.plants import builtin_demo_plant
from qstab.simulator import boundary_points, run_quantized
from qstab.synthesis import GridPlan, synthesize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--margins", type=int, nargs="+", default=[0, 1, 2, 4])
    ap.add_argument("--delta", type=float, nargs="+", default=[1 / 3])
    ap.add_argument("--points", type=int, default=3)
    ap.add_argument("--horizon", type=float, default=2.0)
    ap.add_argument("--mu", type=float, default=1.0)
    args = ap.parse_args()

    plant = builtin_demo_plant()
    print(f"{'delta':>6} {'j':>3} {'DT_m':>10} {'bound':>10} {'max R_av':>9} {'min dwell':>10} {'events':>7} {'secs':>5}")
    for delta in args.delta:
        for m in args.margins:
            syn = synthesize(plant, delta, GridPlan(), level_margin=m)
            t0 = time.perf_counter()
            runs = [run_quantized(plant, syn, x0, z0, [args.mu], args.horizon)
                    for x0, z0 in boundary_points(plant, args.points)]
            rav = max(r.rav_final for r in runs)
            dwell = min(r.min_dwell for r in runs)
            ev = int(np.mean([len(r.events) for r in runs]))
            print(f"{delta:6.3f} {syn.j:3d} {syn.dt_min:10.3e} {syn.rate_bound_quantized:10.3e} "
                  f"{rav:9.1f} {dwell:10.3e} {ev:7d} {time.perf_counter() - t0:5.1f}")


if __name__ == "__main__":
    main()
