"""Nearest-vertex baseline against column lengths on a solved run directory.

Reads ``trajectory.npz`` and ``outer.off`` from a directory written by
``ribbon register`` and prints per-vertex and summary comparisons, along with
the fraction of vertices where the baseline is within one outer edge length of
the corrected column (the lower-bound check).

    python scripts/compare_baseline.py run/
"""

import argparse
from pathlib import Path

import numpy as np

from ribbon.export import load_trajectory
from ribbon.meshio import load_mesh
from ribbon.thickness import build_report, histogram


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("run", type=Path)
    ap.add_argument("--bins", type=int, default=20)
    args = ap.parse_args()
    traj, meta = load_trajectory(args.run / "trajectory.npz")
    outer = load_mesh(args.run / "outer.off")
    rep = build_report(traj, outer)
    m = rep.mask
    base, cor, raw = rep.baseline[m], rep.corrected_length[m], rep.column_length[m]
    slack = float(outer.edge_lengths().max())
    print(f"solver status {meta.get('status')}, {m.sum()} interior vertices")
    print(f"mean baseline {base.mean():.4f}  column {raw.mean():.4f}  corrected {cor.mean():.4f}")
    print(f"baseline <= corrected + {slack:.3f}: {100 * np.mean(base <= cor + slack):.1f}%")
    upper = float(np.percentile(np.concatenate([base, cor]), 99.5))
    eb, cb = histogram(base, args.bins, upper)
    _, cc = histogram(cor, args.bins, upper)
    print("bin\tbaseline\tcolumn")
    for lo, a, b in zip(eb[:-1], cb, cc):
        print(f"{lo:.3f}\t{a}\t{b}")


if __name__ == "__main__":
    main()
