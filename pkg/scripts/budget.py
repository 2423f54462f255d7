"""Operator-call accounting of the weak and strong formulations at equal network-update counts.

    python scripts/budget.py configs/tiny.cfg --maxiter1 200 --maxiter2 500
"""

import argparse
import time
from pathlib import Path

from pjrm.config import load_config
from pjrm.solver import solve


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", type=Path)
    p.add_argument("--maxiter1", type=int, default=200)
    p.add_argument("--maxiter2", type=int, default=500)
    args = p.parse_args(argv)

    cfg = load_config(args.config)
    _, _, op, _, surveys = cfg.simulate()
    ops = [op] * cfg.n_surveys
    print(f"{'formulation':<12}{'updates':>10}{'op calls':>10}{'setup':>8}{'seconds':>9}")
    for formulation in ("weak", "strong"):
        scfg = cfg.solver_config(formulation=formulation, maxiter1=args.maxiter1, maxiter2=args.maxiter2)
        t0 = time.perf_counter()
        res = solve(scfg, ops, surveys)
        print(f"{formulation:<12}{res.network_updates:>10}{res.forward_op_calls:>10}{res.setup_op_calls:>8}"
              f"{time.perf_counter() - t0:>9.1f}")


if __name__ == "__main__":
    main()
