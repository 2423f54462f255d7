"""Posterior time-lapse statistics and scalar quality metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _stack(samples) -> np.ndarray:
    arr = np.asarray(samples)
    if arr.ndim != 3:
        raise ValueError("samples must be a stack of 2-D grids")
    return arr


def _check_pair(a, b):
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"sample counts differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[1:] != b.shape[1:]:
        raise ValueError("sample grids differ in shape")


def time_lapse_mean(samples_a, samples_b) -> np.ndarray:
    """Difference of posterior means, ``mean(b) - mean(a)``."""
    a, b = _stack(samples_a), _stack(samples_b)
    _check_pair(a, b)
    return b.mean(axis=0) - a.mean(axis=0)


def time_lapse_std(samples_a, samples_b) -> np.ndarray:
    """Population std over draws of the paired differences ``b[s] - a[s]``."""
    a, b = _stack(samples_a), _stack(samples_b)
    _check_pair(a, b)
    if a.shape[0] < 2:
        raise ValueError("need at least two samples per survey")
    return (b - a).std(axis=0)


@dataclass
class MetricsRecord:
    rmse_timelapse: float
    mean_std_in_plume: float
    mean_std_out_plume: float
    pearson_r_std_vs_abs_error: float
    correlation_degenerate: bool = False
    data_residuals: list = field(default_factory=list)
    forward_op_calls: int = 0

    def as_row(self) -> dict:
        row = {
            "rmse_timelapse": self.rmse_timelapse,
            "mean_std_in_plume": self.mean_std_in_plume,
            "mean_std_out_plume": self.mean_std_out_plume,
            "pearson_r_std_vs_abs_error": self.pearson_r_std_vs_abs_error,
            "correlation_degenerate": int(self.correlation_degenerate),
        }
        for i, r in enumerate(self.data_residuals, start=1):
            row[f"data_residual_{i}"] = r
        row["forward_op_calls"] = self.forward_op_calls
        return row


@dataclass
class TimeLapseResult:
    mean_diff: np.ndarray
    std_diff: np.ndarray
    error: np.ndarray
    metrics: MetricsRecord


def pearson(a: np.ndarray, b: np.ndarray):
    """Pearson correlation over all pixels; ``(0.0, True)`` if either map is constant."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(np.dot(da, da)), np.sqrt(np.dot(db, db))
    if na == 0 or nb == 0:
        return 0.0, True
    return float(np.clip(np.dot(da, db) / (na * nb), -1.0, 1.0)), False


def compute_metrics(mean_diff, std_diff, truth_a, truth_b, mask, data_residuals=(), forward_op_calls=0) -> MetricsRecord:
    mean_diff = np.asarray(mean_diff, dtype=np.float64)
    std_diff = np.asarray(std_diff, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    true_diff = np.asarray(truth_b, dtype=np.float64) - np.asarray(truth_a, dtype=np.float64)
    if not (mean_diff.shape == std_diff.shape == true_diff.shape == mask.shape):
        raise ValueError("metric inputs must share one grid shape")
    error = mean_diff - true_diff
    rmse = float(np.sqrt(np.mean(error**2)))
    std_in = float(std_diff[mask].mean()) if mask.any() else 0.0
    std_out = float(std_diff[~mask].mean()) if (~mask).any() else 0.0
    r, degenerate = pearson(std_diff, np.abs(error))
    return MetricsRecord(rmse, std_in, std_out, r, degenerate,
                         [float(v) for v in data_residuals], int(forward_op_calls))


def analyze_pair(samples_a, samples_b, truth_a, truth_b, mask, data_residuals=(), forward_op_calls=0) -> TimeLapseResult:
    mean_diff = time_lapse_mean(samples_a, samples_b)
    std_diff = time_lapse_std(samples_a, samples_b)
    error = mean_diff - (np.asarray(truth_b) - np.asarray(truth_a))
    metrics = compute_metrics(mean_diff, std_diff, truth_a, truth_b, mask, data_residuals, forward_op_calls)
    return TimeLapseResult(mean_diff, std_diff, error, metrics)


def data_residual(op, x, y) -> float:
    """Relative data misfit ``||A x - y|| / ||y||``."""
    ny = np.linalg.norm(y)
    r = np.linalg.norm(op.forward(x) - y)
    return float(r / ny) if ny > 0 else float(r)


def robust_clip(grid, k: float = 3.0):
    """Symmetric clip range ``+-k`` robust std (scaled MAD), centred at zero."""
    g = np.asarray(grid, dtype=np.float64)
    mad = np.median(np.abs(g - np.median(g)))
    s = 1.4826 * mad
    if s == 0:
        s = float(np.abs(g).max()) or 1.0
    return -k * s, k * s
