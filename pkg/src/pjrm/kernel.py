"""Numeric substrate: seeded random streams, ADAM, and verification oracles.

Grids are plain 2-D ``numpy`` arrays shaped ``(nz, nx)`` (depth-major) and
latent/activation tensors are 3-D arrays shaped ``(channels, height, width)``.
Everything here is dtype-generic; callers pick float32 or float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(value: int) -> int:
    """One round of the SplitMix64 finalizer (Steele, Lea & Flood constants)."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass
class RngState:
    """A reproducible random stream identified by ``(master_seed, stream_id)``.

    The underlying bit generator is Philox (counter-based), keyed through a
    ``SeedSequence`` built from both integers, so a stream only depends on its
    identifiers and never on the order in which other streams are consumed.
    """

    master_seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.master_seed = int(self.master_seed) & _MASK64
        self.stream_id = int(self.stream_id) & _MASK64
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def derive(self, label: int) -> "RngState":
        """Child stream; same label on the same parent gives the same child."""
        child = splitmix64(self.stream_id ^ splitmix64(int(label) & _MASK64))
        return RngState(self.master_seed, child)


def sample_standard_normal(rng: RngState, shape, dtype=np.float64) -> np.ndarray:
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if not shape or any(s <= 0 for s in shape):
        raise ValueError(f"shape must have positive dims, got {shape}")
    return rng.generator.standard_normal(shape, dtype=dtype)


def check_finite(array: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise FloatingPointError(f"non-finite values in {what}")
    return array


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> dict:
    """One bias-corrected ADAM update, applied in place to ``params``.

    ``params`` and ``grads`` are dicts of arrays keyed by block name. Moment
    buffers are created lazily on first use. Returns ``params``.
    """
    if lr < 0:
        raise ValueError("lr must be non-negative")
    if set(params) != set(grads):
        raise ValueError(f"parameter/gradient blocks differ: {sorted(set(params) ^ set(grads))}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"shape mismatch for {name}: {g.shape} vs {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in block {name}")

    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.first_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(p)
            state.second_moment[name] = np.zeros_like(p)
        v = state.second_moment[name]
        if m.shape != p.shape:
            raise ValueError(f"moment buffer shape mismatch for {name}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + state.epsilon)
    return params


def finite_difference_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=np.float64).ravel()
    grad = np.empty_like(x)
    for j in range(x.size):
        orig = x[j]
        x[j] = orig + h
        fp = float(f(x))
        x[j] = orig - h
        fm = float(f(x))
        x[j] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {j}")
        grad[j] = (fp - fm) / (2.0 * h)
    return grad


def power_iteration_norm(apply, apply_adjoint, shape, iters: int, rng: RngState,
                         return_history: bool = False):
    """Estimate the largest singular value of a linear map.

    Runs power iteration on the normal operator and reports ``||A v||`` for the
    current unit vector ``v``; that Rayleigh-quotient estimate cannot decrease
    from one iteration to the next.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    v = sample_standard_normal(rng, shape)
    v /= np.linalg.norm(v)
    history = []
    for _ in range(iters):
        av = apply(v)
        history.append(float(np.linalg.norm(av)))
        w = apply_adjoint(av)
        nw = np.linalg.norm(w)
        if nw == 0:
            history[-1] = 0.0
            break
        v = w / nw
    estimate = history[-1]
    return (estimate, history) if return_history else estimate
