"""Synthetic time-lapse ground truth: layered earth, growing plume, noisy surveys.

Flow simulation is replaced by a parametric plume: an anisotropic Gaussian
blob whose radii grow and whose centre drifts upward (buoyancy proxy) with
survey time. The anomaly is negative, since CO2 lowers impedance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import RngState, power_iteration_norm
from .operator import PoststackOperator, SurveyData, add_noise, ricker_half_width, ricker_wavelet

SUPPORT_CUTOFF = 1e-3
# survey streams are derived from the scenario stream with these labels
_NOISE_STREAM = 0x4E4F
_NORM_STREAM = 0x4F50


@dataclass
class EarthModel:
    background: np.ndarray
    extent_z_km: float
    extent_x_km: float
    property_range: tuple

    def __post_init__(self):
        lo, hi = self.property_range
        if self.extent_z_km <= 0 or self.extent_x_km <= 0:
            raise ValueError("extents must be positive")
        if self.background.min() < lo or self.background.max() > hi:
            raise ValueError("background outside property range")

    @property
    def shape(self):
        return self.background.shape

    @property
    def dz_m(self):
        return 1000.0 * self.extent_z_km / self.background.shape[0]


def build_layered_background(nz, nx, num_layers, rng: RngState, property_range=(2.0, 6.0),
                             extent_z_km=3.2, extent_x_km=5.9, margin=0.5, undulation=2.0):
    """Piecewise-constant layers with sinusoidally undulating interfaces.

    Layer values are drawn inside ``property_range`` shrunk by ``margin`` on
    both ends so a plume contrast of up to ``margin`` keeps the truth in range.
    """
    if num_layers < 2:
        raise ValueError("num_layers must be >= 2")
    lo, hi = property_range
    if hi - lo <= 2 * margin:
        raise ValueError("property range too narrow for the margin")
    g = rng.generator
    depths = np.sort(g.uniform(0.1 * nz, 0.9 * nz, num_layers - 1))
    # impedance tends to increase with depth; jitter keeps layers distinct
    base = np.linspace(lo + margin, hi - margin, num_layers)
    values = np.clip(base + g.uniform(-0.3, 0.3, num_layers) * (hi - lo) / num_layers, lo + margin, hi - margin)
    phases = g.uniform(0, 2 * np.pi, num_layers - 1)
    wavelengths = g.uniform(0.6, 1.5, num_layers - 1) * nx
    zz = np.arange(nz)[:, None]
    xx = np.arange(nx)[None, :]
    layer = np.zeros((nz, nx), dtype=int)
    for j in range(num_layers - 1):
        iface = depths[j] + undulation * np.sin(2 * np.pi * xx / wavelengths[j] + phases[j])
        layer += (zz >= iface).astype(int)
    return EarthModel(values[layer], extent_z_km, extent_x_km, (lo, hi))


@dataclass
class PlumeSchedule:
    """Plume geometry; radii, amplitude and drift are the values at the last survey.

    Survey ``i`` of ``n_surveys`` sits at growth time
    ``t_i = t_first + (1 - t_first) * (i - 1) / (n_surveys - 1)``, so the first
    and last surveys are the same for every survey count.
    """

    nz: int
    nx: int
    injection_z: float
    injection_x: float
    radius_z: float
    radius_x: float
    amplitude: float = -0.4
    drift: float = 6.0
    t_first: float = 0.35
    n_surveys: int = 2
    smoothness: float = 1.0

    def __post_init__(self):
        if self.n_surveys < 1:
            raise ValueError("n_surveys must be >= 1")
        if not 0 < self.t_first <= 1:
            raise ValueError("t_first must be in (0, 1]")
        if self.radius_z <= 0 or self.radius_x <= 0 or self.smoothness <= 0:
            raise ValueError("radii and smoothness must be positive")
        cz, _ = self.center(self.n_surveys)
        rz, rx = self.radii(self.n_surveys)
        reach = math.log(1.0 / SUPPORT_CUTOFF) ** (1.0 / (2 * self.smoothness))
        if (cz - rz * reach < 0 or cz + rz * reach > self.nz - 1
                or self.injection_x - rx * reach < 0 or self.injection_x + rx * reach > self.nx - 1):
            raise ValueError("plume support leaves the grid")

    def time(self, i):
        if not 1 <= i <= self.n_surveys:
            raise ValueError(f"survey index {i} outside 1..{self.n_surveys}")
        if self.n_surveys == 1:
            return 1.0
        return self.t_first + (1.0 - self.t_first) * (i - 1) / (self.n_surveys - 1)

    def radii(self, i):
        s = math.sqrt(self.time(i))
        return self.radius_z * s, self.radius_x * s

    def center(self, i):
        # drift scales like the radii, so each plume is a dilation of the last about the injection point
        return self.injection_z - self.drift * math.sqrt(self.time(i)), self.injection_x

    def peak(self, i):
        return self.amplitude * (0.5 + 0.5 * self.time(i))


def grow_plume(schedule: PlumeSchedule, i: int) -> np.ndarray:
    """Anomaly of survey ``i``; values below ``1e-3`` of the peak are cut to zero."""
    cz, cx = schedule.center(i)
    rz, rx = schedule.radii(i)
    zz = (np.arange(schedule.nz)[:, None] - cz) / rz
    xx = (np.arange(schedule.nx)[None, :] - cx) / rx
    shape = np.exp(-((zz**2 + xx**2) ** schedule.smoothness))
    shape[shape < SUPPORT_CUTOFF] = 0.0
    return schedule.peak(i) * shape


def plume_mask(schedule: PlumeSchedule, i: int, threshold: float = 0.05) -> np.ndarray:
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    anomaly = np.abs(grow_plume(schedule, i))
    peak = anomaly.max()
    if peak == 0:
        return np.zeros(anomaly.shape, dtype=bool)
    return anomaly > threshold * peak


def build_operator(nz, nx, dz_m, peak_freq=15.0, velocity=3000.0, normalize=True) -> PoststackOperator:
    """Post-stack operator with a Ricker wavelet on a two-way-time axis ``dt = 2 dz / v``.

    With ``normalize`` the operator is scaled to unit spectral norm.
    """
    dt = 2.0 * dz_m / velocity
    wavelet = ricker_wavelet(peak_freq, dt, ricker_half_width(peak_freq, dt))
    op = PoststackOperator(nz, nx, wavelet, dz=dz_m)
    if not normalize:
        return op
    norm = power_iteration_norm(op.forward, op.adjoint, op.shape, 100, RngState(0, _NORM_STREAM))
    return PoststackOperator(nz, nx, wavelet, dz=dz_m, scale=1.0 / norm)


def simulate_surveys(model: EarthModel, schedule: PlumeSchedule, op: PoststackOperator,
                     noise_sigma: float, N: int, rng: RngState, dtype=np.float64):
    """Ground truths ``x*_i`` and noisy surveys ``y_i = A x*_i + eps_i`` for ``i = 1..N``."""
    if N != schedule.n_surveys:
        raise ValueError("N must match the plume schedule")
    if model.shape != op.shape:
        raise ValueError("earth model and operator dims differ")
    truths, surveys = [], []
    noise_rng = rng.derive(_NOISE_STREAM)
    for i in range(1, N + 1):
        x = (model.background + grow_plume(schedule, i)).astype(dtype)
        truths.append(x)
        y = op.forward(x)
        surveys.append(add_noise(y, noise_sigma, noise_rng.derive(i), survey_index=i))
    return truths, surveys


__all__ = [
    "EarthModel", "PlumeSchedule", "SurveyData", "build_layered_background", "build_operator",
    "grow_plume", "plume_mask", "simulate_surveys",
]
