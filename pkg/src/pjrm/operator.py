"""Post-stack modeling operator: vertical derivative then wavelet convolution.

Each lateral trace (column) of a ``(nz, nx)`` model is differentiated along
depth and convolved with a zero-phase wavelet, so models and data share the
same grid shape.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d, correlate1d

from .kernel import RngState, check_finite, sample_standard_normal


def ricker_wavelet(peak_freq: float, dt: float, half_width: int) -> np.ndarray:
    """Ricker wavelet sampled at ``k*dt`` for ``k`` in ``[-half_width, half_width]``."""
    if peak_freq <= 0 or dt <= 0:
        raise ValueError("peak_freq and dt must be positive")
    if half_width < 1:
        raise ValueError("half_width must be >= 1")
    t = np.arange(-half_width, half_width + 1) * dt
    a = (np.pi * peak_freq * t) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def ricker_half_width(peak_freq: float, dt: float, tol: float = 1e-4) -> int:
    """Smallest half width beyond which the Ricker envelope stays below ``tol``."""
    k = 1
    while True:
        a = (np.pi * peak_freq * k * dt) ** 2
        if abs((1.0 - 2.0 * a) * np.exp(-a)) < tol and a > 0.5:
            return k
        k += 1


class CallCounter:
    """Thread-safe monotone counter of operator applications."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n: int = 1):
        with self._lock:
            self._count += n

    @property
    def value(self) -> int:
        return self._count


@dataclass(frozen=True, eq=False)
class PoststackOperator:
    nz: int
    nx: int
    wavelet: np.ndarray
    dz: float = 1.0
    scale: float = 1.0
    counter: CallCounter = field(default_factory=CallCounter, repr=False)

    def __post_init__(self):
        w = np.asarray(self.wavelet, dtype=np.float64)
        if w.ndim != 1 or w.size % 2 == 0:
            raise ValueError("wavelet must be a 1-D array of odd length")
        if self.nz < 2 or self.nx < 1:
            raise ValueError("need nz >= 2 and nx >= 1")
        if self.dz <= 0:
            raise ValueError("dz must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "wavelet", w)

    @property
    def shape(self):
        return (self.nz, self.nx)

    def _check(self, a, what):
        if a.shape != self.shape:
            raise ValueError(f"{what} shape {a.shape} does not match operator {self.shape}")

    def _wavelet_for(self, a):
        return self.wavelet.astype(a.dtype, copy=False)

    def derivative(self, x):
        d = np.empty_like(x)
        d[1:-1] = (x[2:] - x[:-2]) / (2.0 * self.dz)
        d[0] = (x[1] - x[0]) / self.dz
        d[-1] = (x[-1] - x[-2]) / self.dz
        return d

    def derivative_adjoint(self, y):
        out = np.zeros_like(y)
        c = y[1:-1] / (2.0 * self.dz)
        out[:-2] -= c
        out[2:] += c
        out[0] -= y[0] / self.dz
        out[1] += y[0] / self.dz
        out[-2] -= y[-1] / self.dz
        out[-1] += y[-1] / self.dz
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._check(x, "model")
        self.counter.add()
        d = self.derivative(x)
        out = convolve1d(d, self._wavelet_for(d), axis=0, mode="constant", cval=0.0)
        return out * x.dtype.type(self.scale)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        self._check(y, "data")
        self.counter.add()
        c = correlate1d(y, self._wavelet_for(y), axis=0, mode="constant", cval=0.0)
        return self.derivative_adjoint(c) * y.dtype.type(self.scale)

    def dense(self) -> np.ndarray:
        """Explicit ``(nz*nx, nz*nx)`` matrix acting on row-major flattened grids."""
        n = self.nz * self.nx
        mat = np.empty((n, n))
        e = np.zeros(self.shape)
        for j in range(n):
            e.flat[j] = 1.0
            mat[:, j] = self.forward(e).ravel()
            e.flat[j] = 0.0
        return mat


def apply_forward(op: PoststackOperator, x: np.ndarray) -> np.ndarray:
    return op.forward(x)


def apply_adjoint(op: PoststackOperator, y: np.ndarray) -> np.ndarray:
    return op.adjoint(y)


@dataclass
class SurveyData:
    grid: np.ndarray
    survey_index: int
    noise_sigma: float = 0.0


def add_noise(y: np.ndarray, sigma: float, rng: RngState, survey_index: int = 1) -> SurveyData:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return SurveyData(y.copy(), survey_index, 0.0)
    eta = sample_standard_normal(rng, y.shape, dtype=y.dtype)
    return SurveyData(y + y.dtype.type(sigma) * eta, survey_index, float(sigma))


def data_misfit_gradient(op: PoststackOperator, x: np.ndarray, y, sigma: float) -> np.ndarray:
    """Gradient of ``0.5/sigma**2 * ||A x - y||**2`` with respect to ``x``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    y = y.grid if isinstance(y, SurveyData) else y
    r = op.forward(x) - y
    g = op.adjoint(r) / x.dtype.type(sigma * sigma)
    return check_finite(g, "data-misfit gradient")
