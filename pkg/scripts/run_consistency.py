"""Error-versus-rollouts curve for the two-state example, with per-grid medians.

    python scripts/run_consistency.py --seeds 0 1 2 3 4 --rollouts 100000 --out curve.csv
"""
import argparse
import sys

import numpy as np

from multnoise.experiments import CURVE_COLUMNS, ExperimentConfig, consistency_curve, to_csv
from multnoise.system import simple_example_system


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--rollouts", type=int, default=100_000)
    p.add_argument("--grid-points", type=int, default=4)
    p.add_argument("--grid-min", type=int, default=100)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="CSV with one row per seed and grid point")
    args = p.parse_args(argv)
    cfg = ExperimentConfig(seeds=tuple(args.seeds), rollouts=args.rollouts, grid_points=args.grid_points,
                           grid_min=args.grid_min, threads=args.threads)
    curve = consistency_curve(simple_example_system(), cfg)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(to_csv(curve.rows, CURVE_COLUMNS))
    grid = cfg.n_r_grid()
    print(f"{'n_r':>8} {'AB':>9} {'SigmaA':>9} {'SigmaB':>9}   (medians over {len(args.seeds)} seeds)")
    for g in grid:
        med = [np.median([r[k] for r in curve.rows if r["n_r"] == g])
               for k in ("rel_err_AB", "rel_err_SigmaA", "rel_err_SigmaB")]
        print(f"{g:>8} " + " ".join(f"{v:9.4f}" for v in med))
    if len(grid) > 1:
        for k in ("rel_err_AB", "rel_err_SigmaA", "rel_err_SigmaB"):
            med = [np.median([r[k] for r in curve.rows if r["n_r"] == g]) for g in grid]
            print(f"log-log slope {k[8:]}: {np.polyfit(np.log10(grid), np.log10(med), 1)[0]:.3f}")


if __name__ == "__main__":
    sys.exit(main())
