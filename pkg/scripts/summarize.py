"""Paired-seed summaries of sweep CSVs written by sweep.py.

    python scripts/summarize.py sweep2.csv sweep6.csv
"""

import argparse
import csv
from collections import defaultdict

import numpy as np


def load(paths):
    rows = defaultdict(dict)
    for path in paths:
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rows[(r["config"], r["mode"])][int(r["seed"])] = r
    return rows


def paired(a, b, key):
    seeds = sorted(set(a) & set(b))
    return seeds, np.array([float(a[s][key]) for s in seeds]), np.array([float(b[s][key]) for s in seeds])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("csv", nargs="+")
    args = p.parse_args(argv)
    rows = load(args.csv)

    for (config, mode), by_seed in sorted(rows.items()):
        r = np.array([float(v["pearson_r_std_vs_abs_error"]) for v in by_seed.values()])
        rmse = np.array([float(v["rmse_timelapse"]) for v in by_seed.values()])
        print(f"{config:>8} {mode:<12} seeds={len(by_seed):2d}  median rmse={np.median(rmse):.4f}  "
              f"r>0.2 in {int((r > 0.2).sum())}  median r={np.median(r):.3f}")

    configs = sorted({c for c, _ in rows})
    for c in configs:
        if (c, "joint") in rows and (c, "independent") in rows:
            seeds, j, i = paired(rows[(c, "joint")], rows[(c, "independent")], "rmse_timelapse")
            print(f"{c}: joint beats independent in {int((j < i).sum())}/{len(seeds)}, "
                  f"median ratio {np.median(j / i):.3f}")
    for a in configs:
        for b in configs:
            if a < b and (a, "joint") in rows and (b, "joint") in rows:
                for key in ("mean_std_in_plume", "rmse_timelapse"):
                    seeds, x, y = paired(rows[(a, "joint")], rows[(b, "joint")], key)
                    print(f"{b} vs {a} {key}: lower in {int((y < x).sum())}/{len(seeds)} "
                          f"(median {np.median(x):.4f} -> {np.median(y):.4f})")


if __name__ == "__main__":
    main()
