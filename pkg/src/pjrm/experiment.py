"""In-memory simulate -> invert -> analyze for one configuration (no files)."""

from __future__ import annotations

import time
from dataclasses import dataclass

from .analysis import TimeLapseResult, analyze_pair, data_residual
from .config import RunConfig
from .scenario import plume_mask
from .solver import InversionResult, solve


@dataclass
class Outcome:
    config: RunConfig
    result: InversionResult
    timelapse: TimeLapseResult
    seconds: float

    @property
    def metrics(self):
        return self.timelapse.metrics


def run_experiment(cfg: RunConfig, **solver_overrides) -> Outcome:
    t0 = time.perf_counter()
    _, schedule, op, truths, surveys = cfg.simulate()
    scfg = cfg.solver_config(**solver_overrides)
    result = solve(scfg, [op] * cfg.n_surveys, surveys)
    residuals = [data_residual(op, x, d.grid) for x, d in zip(result.x, surveys)]
    mask = plume_mask(schedule, cfg.n_surveys, cfg.mask_threshold)
    tl = analyze_pair(result.samples[0], result.samples[-1], truths[0], truths[-1], mask, residuals,
                      result.forward_op_calls)
    return Outcome(cfg, result, tl, time.perf_counter() - t0)
