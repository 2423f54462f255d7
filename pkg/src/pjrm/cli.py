"""Command-line entry point: simulate -> invert -> analyze, plus self-checks."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import gridio
from .analysis import analyze_pair, data_residual, robust_clip
from .checks import adjoint_report, gradient_report, timed
from .config import ConfigError, RunConfig, load_config
from .operator import SurveyData
from .scenario import plume_mask
from .solver import solve

log = logging.getLogger("pjrm")


def _write_manifest(path, items: dict):
    Path(path).write_text("".join(f"{k} = {gridio.fmt(v)}\n" for k, v in items.items()))


def _read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = v
    return out


def cmd_simulate(cfg: RunConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    model, schedule, op, truths, surveys = cfg.simulate()
    (out / "config.cfg").write_text(cfg.to_text())
    gridio.write_grid(out / "background.pjrm", model.background.astype(cfg.dtype))
    for i, (x, d) in enumerate(zip(truths, surveys), start=1):
        gridio.write_grid(out / f"truth_{i}.pjrm", x)
        gridio.write_grid(out / f"survey_{i}.pjrm", d.grid)
    log.info("simulated %d surveys on a %dx%d grid into %s", cfg.n_surveys, cfg.nz, cfg.nx, out)


def _load_surveys(cfg: RunConfig, data: Path):
    return [SurveyData(gridio.read_grid(data / f"survey_{i}.pjrm"), i, cfg.noise_sigma)
            for i in range(1, cfg.n_surveys + 1)]


def cmd_invert(cfg: RunConfig, data: Path, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    surveys = _load_surveys(cfg, data)
    op = cfg.operator()
    scfg = cfg.solver_config()

    def progress(it, state):
        if (it + 1) % max(1, scfg.maxiter1 // 10) == 0:
            log.info("%s iteration %d, last loss %.4g", scfg.mode, it + 1, state.trace[-1][-1])

    result = solve(scfg, [op] * cfg.n_surveys, surveys, progress)
    (out / "config.cfg").write_text(cfg.to_text())
    for i in range(cfg.n_surveys):
        gridio.write_stack(out / f"samples_{i + 1}.pjrm", result.samples[i])
        gridio.write_grid(out / f"xhat_{i + 1}.pjrm", result.x[i])
    for i, th in enumerate(result.thetas):
        name = "theta" if scfg.mode == "joint" else f"theta_{i + 1}"
        gridio.save_blocks(out / name, th.blocks())
    for i, phi in enumerate(result.phis):
        gridio.save_blocks(out / f"phi_{i + 1}", phi.blocks())
    gridio.write_trace(out / "trace.csv", result.trace)
    _write_manifest(out / "result.txt", {
        "mode": scfg.mode, "formulation": scfg.formulation, "seed": scfg.seed, "n_surveys": cfg.n_surveys,
        "n_samples": scfg.n_samples, "nz": cfg.nz, "nx": cfg.nx,
        "forward_op_calls": result.forward_op_calls, "setup_op_calls": result.setup_op_calls,
        "network_updates": result.network_updates, "sigma": result.sigma, "gamma": result.gamma,
        "tau": result.tau,
    })
    log.info("inversion done: %d operator calls, %d network updates", result.forward_op_calls,
             result.network_updates)
    return result


def cmd_analyze(cfg: RunConfig, data: Path, results: Path, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    manifest = _read_manifest(results / "result.txt")
    n = cfg.n_surveys
    truths = [gridio.read_grid(data / f"truth_{i}.pjrm") for i in (1, n)]
    samples = [gridio.read_stack(results / f"samples_{i}.pjrm", cfg.nz) for i in range(1, n + 1)]
    surveys = _load_surveys(cfg, data)
    op = cfg.operator()
    xhat = [gridio.read_grid(results / f"xhat_{i}.pjrm") for i in range(1, n + 1)]
    residuals = [data_residual(op, x, d.grid) for x, d in zip(xhat, surveys)]
    mask = plume_mask(cfg.schedule(), n, cfg.mask_threshold)
    tl = analyze_pair(samples[0], samples[-1], truths[0], truths[1], mask, residuals,
                      int(manifest.get("forward_op_calls", 0)))
    true_diff = truths[1].astype(np.float64) - truths[0]
    grids = {"mean_diff": tl.mean_diff, "std_diff": tl.std_diff, "error": tl.error, "true_diff": true_diff}
    for name, g in grids.items():
        gridio.write_grid(out / f"{name}.pjrm", np.asarray(g, dtype=np.float64))
    lo, hi = robust_clip(true_diff)
    for name in ("mean_diff", "error", "true_diff"):
        gridio.write_pgm(out / f"{name}.pgm", grids[name], lo, hi)
    gridio.write_pgm(out / "std_diff.pgm", tl.std_diff, 0.0, max(float(tl.std_diff.max()), 1e-12))
    for i, s in enumerate(samples, start=1):
        gridio.write_pgm(out / f"posterior_mean_{i}.pgm", s.mean(axis=0), cfg.prop_min, cfg.prop_max)
    gridio.write_csv_row(out / "metrics.csv", tl.metrics.as_row())
    for k, v in tl.metrics.as_row().items():
        log.info("%s = %s", k, v)
    return tl


def cmd_check_adjoint(pairs: int, dtype: str):
    lines, elapsed = timed(adjoint_report, pairs, np.dtype(dtype))
    for line in lines:
        print(line)
    print(f"elapsed {elapsed:.2f} s")
    return 0 if all(l.passed for l in lines) else 1


def cmd_check_grad():
    lines, elapsed = timed(gradient_report)
    for line in lines:
        print(line)
    print(f"elapsed {elapsed:.2f} s")
    return 0 if all(l.passed for l in lines) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pjrm", description="Probabilistic joint recovery for time-lapse imaging")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--seed", type=int)
        return sp

    def with_solver(sp):
        sp.add_argument("--mode", choices=["joint", "independent"])
        sp.add_argument("--formulation", choices=["weak", "strong"])
        return sp

    sp = with_config(sub.add_parser("simulate", help="generate ground truths and noisy surveys"))
    sp.add_argument("--out", required=True, type=Path)
    sp = with_solver(with_config(sub.add_parser("invert", help="run the posterior inversion")))
    sp.add_argument("--data", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path)
    sp = with_config(sub.add_parser("analyze", help="time-lapse statistics, metrics and renders"))
    sp.add_argument("--data", required=True, type=Path)
    sp.add_argument("--results", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path)
    sp = with_solver(with_config(sub.add_parser("repro", help="simulate, invert and analyze in one go")))
    sp.add_argument("--out", required=True, type=Path)
    sp = sub.add_parser("check-adjoint", help="dot-product test of the modeling operator")
    sp.add_argument("--pairs", type=int, default=100)
    sp.add_argument("--dtype", choices=["float32", "float64"], default="float64")
    sub.add_parser("check-grad", help="finite-difference checks of every hand-written gradient")
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage and exits 2 on bad input, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "check-adjoint":
            return cmd_check_adjoint(args.pairs, args.dtype)
        if args.command == "check-grad":
            return cmd_check_grad()
        overrides = dict(seed=args.seed, mode=getattr(args, "mode", None),
                         formulation=getattr(args, "formulation", None))
        cfg = load_config(args.config, **overrides)
        if args.command == "simulate":
            cmd_simulate(cfg, args.out)
        elif args.command == "invert":
            cmd_invert(cfg, args.data, args.out)
        elif args.command == "analyze":
            cmd_analyze(cfg, args.data, args.results, args.out)
        elif args.command == "repro":
            cmd_simulate(cfg, args.out / "data")
            cmd_invert(cfg, args.out / "data", args.out / "result")
            cmd_analyze(cfg, args.out / "data", args.out / "result", args.out / "analysis")
        return 0
    except gridio.GridFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
