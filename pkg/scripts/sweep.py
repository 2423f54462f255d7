"""Multi-seed desk sweep: one metrics row per (seed, config, mode).

    python scripts/sweep.py configs/desk2.cfg --seeds 0-9 --modes joint independent
"""

import argparse
import csv
import sys
from pathlib import Path

from pjrm.config import load_config
from pjrm.experiment import run_experiment


def seed_range(text):
    lo, _, hi = text.partition("-")
    return range(int(lo), int(hi or lo) + 1)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("configs", nargs="+", type=Path)
    p.add_argument("--seeds", type=seed_range, default=range(10))
    p.add_argument("--modes", nargs="+", default=["joint"], choices=["joint", "independent"])
    p.add_argument("--out", type=Path, help="CSV file (default: stdout)")
    args = p.parse_args(argv)

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = None
    for seed in args.seeds:
        for path in args.configs:
            for mode in args.modes:
                out = run_experiment(load_config(path, seed=seed, mode=mode))
                row = {"config": path.stem, "seed": seed, "mode": mode, "seconds": round(out.seconds, 1)}
                row.update(out.metrics.as_row())
                if writer is None:
                    writer = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\n")
                    writer.writeheader()
                writer.writerow(row)
                fh.flush()


if __name__ == "__main__":
    main()
