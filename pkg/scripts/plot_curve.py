"""Plot a consistency CSV (needs matplotlib, which the package does not depend on).

    python scripts/plot_curve.py curve.csv curve.png
"""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt
import numpy as np


def main(src, dst):
    by_key = defaultdict(lambda: defaultdict(list))
    with open(src, newline="") as fh:
        for row in csv.DictReader(fh):
            for k in ("rel_err_AB", "rel_err_SigmaA", "rel_err_SigmaB"):
                if row[k]:
                    by_key[k][int(row["n_r"])].append(float(row[k]))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for k, pts in by_key.items():
        n = np.array(sorted(pts))
        ax.loglog(n, [np.median(pts[v]) for v in n], marker=".", label=k[8:])
    ax.set_xlabel("rollouts")
    ax.set_ylabel("median relative error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(dst, dpi=150)


if __name__ == "__main__":
    main(*sys.argv[1:3])
