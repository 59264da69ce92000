"""Wall-clock time of one end-to-end run at about 240 vertices and 420 faces.

    python scripts/scale_timing.py [--grid 15 16] [--T 10] [--sigma-v 2] [--rho-max 1e3]
"""

import argparse
import logging
import time

from ribbon.solver import SolverParams, solve
from ribbon.synth import make_fold_pair
from ribbon.thickness import build_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--grid", nargs=2, type=int, default=[15, 16])
    ap.add_argument("--T", type=int, default=10)
    ap.add_argument("--sigma-v", type=float, default=2.0, help="velocity kernel width (unset the default with 0)")
    ap.add_argument("--rho-max", type=float, default=1e3)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    pair = make_fold_pair(n=tuple(args.grid))
    t0 = time.perf_counter()
    sigma_v = args.sigma_v if args.sigma_v > 0 else None
    traj, _, conv = solve(pair, SolverParams(T=args.T, sigma_v=sigma_v, rho_max=args.rho_max))
    t1 = time.perf_counter()
    rep = build_report(traj, pair.outer)
    t2 = time.perf_counter()
    print(f"{pair.inner.n_vertices} vertices, {pair.inner.n_faces} faces, T={args.T}")
    print(f"solve {t1 - t0:.1f} s ({conv.status}, {conv.outer_iterations} outer), report {t2 - t1:.2f} s")
    print(f"mean corrected column {rep.summary['mean']:.4f}")


if __name__ == "__main__":
    main()
