"""Variance-estimation errors on random diffusion networks, one row per seed.

    python scripts/run_network_table.py --seeds 0 1 2 3 4 --out table.csv
"""
import argparse
import dataclasses
import sys
import time

import numpy as np

from multnoise.experiments import NETWORK_COLUMNS, network_trial, to_csv
from multnoise.system import NetworkSpec

STATS = ("mean_sigma", "max_sigma", "mean_delta", "max_delta")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--nodes", type=int, default=8)
    p.add_argument("--horizon", type=int, default=133_185)
    p.add_argument("--rollouts", type=int, default=7)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--clip", action="store_true", help="clip negative variance estimates at zero")
    p.add_argument("--out")
    args = p.parse_args(argv)
    rows = []
    for seed in args.seeds:
        spec = dataclasses.replace(NetworkSpec(nodes=args.nodes), seed=seed)
        t0 = time.perf_counter()
        row = network_trial(spec, args.horizon, args.rollouts, args.threads, args.clip)["row"]
        rows.append(row)
        print(f"seed {seed}: " + " ".join(f"{k}={row[k]:.4g}" for k in STATS if row[k] is not None)
              + f" ms_radius={row['ms_radius']:.4f} flag={row['flag'] or '-'} ({time.perf_counter() - t0:.0f} s)")
    for k in STATS:
        vals = [r[k] for r in rows if r[k] is not None]
        if vals:
            print(f"average {k}: {np.mean(vals):.4g}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(to_csv(rows, NETWORK_COLUMNS))


if __name__ == "__main__":
    sys.exit(main())
