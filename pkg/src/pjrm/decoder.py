"""Deep-decoder generator and per-survey Gaussian-mixture latent encoders.

The decoder is a stack of layers, each doing 1x1 channel mixing, ReLU,
bilinear upsampling and per-channel normalization, followed by a 1x1 mix to a
single channel, a sigmoid and an affine map onto the physical property range.
Gradients are written out by hand; ``decoder_backward`` and ``gmm_backward``
are checked against finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .kernel import RngState, check_finite, sample_standard_normal

NORM_EPS = 1e-6


@lru_cache(maxsize=256)
def _resize_matrix64(n_in: int, n_out: int) -> np.ndarray:
    # half-pixel bilinear interpolation, edge-clamped
    mat = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    rows = np.arange(n_out)
    np.add.at(mat, (rows, i0), 1.0 - frac)
    np.add.at(mat, (rows, i1), frac)
    mat.setflags(write=False)
    return mat


_resize_cache: dict = {}


def resize_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """Linear interpolation matrix of shape ``(n_out, n_in)``."""
    key = (n_in, n_out, np.dtype(dtype).str)
    mat = _resize_cache.get(key)
    if mat is None:
        mat = _resize_matrix64(n_in, n_out).astype(dtype)
        mat.setflags(write=False)
        _resize_cache[key] = mat
    return mat


@dataclass(frozen=True)
class LatentSpec:
    """Shape bookkeeping for the latent code and every decoder layer.

    ``sizes[l]`` is the spatial size after layer ``l``'s upsampling; the last
    entry is always the target grid.
    """

    c0: int
    h0: int
    w0: int
    num_layers: int
    channels: int
    target_nz: int
    target_nx: int
    sizes: tuple = ()

    def __post_init__(self):
        if min(self.c0, self.h0, self.w0, self.num_layers, self.channels) < 1:
            raise ValueError("latent dims, layer count and channels must be >= 1")
        if not self.sizes:
            sh = (self.target_nz / self.h0) ** (1.0 / self.num_layers)
            sw = (self.target_nx / self.w0) ** (1.0 / self.num_layers)
            sizes = [(math.ceil(self.h0 * sh**n - 1e-9), math.ceil(self.w0 * sw**n - 1e-9))
                     for n in range(1, self.num_layers)]
            sizes.append((self.target_nz, self.target_nx))
            object.__setattr__(self, "sizes", tuple(sizes))
        if len(self.sizes) != self.num_layers or tuple(self.sizes[-1]) != (self.target_nz, self.target_nx):
            raise ValueError("layer sizes must end at the target grid")

    @classmethod
    def default(cls, target_nz, target_nx, num_layers=4, channels=32, ratio=16):
        h0 = max(1, math.ceil(target_nz / ratio))
        w0 = max(1, math.ceil(target_nx / ratio))
        return cls(channels, h0, w0, num_layers, channels, target_nz, target_nx)

    @property
    def latent_shape(self):
        return (self.c0, self.h0, self.w0)

    @property
    def upsample_factors(self):
        prev = (self.h0, self.w0)
        out = []
        for s in self.sizes:
            out.append((s[0] / prev[0], s[1] / prev[1]))
            prev = s
        return out


@dataclass
class DeepDecoderParams:
    """Decoder weights. ``out_scale``/``out_shift`` are fixed, not trained."""

    mix: list
    norm_scale: list
    norm_shift: list
    final_mix: np.ndarray
    out_scale: float = 1.0
    out_shift: float = 0.0

    def __post_init__(self):
        if not (len(self.mix) == len(self.norm_scale) == len(self.norm_shift)) or not self.mix:
            raise ValueError("need one mixing matrix and one norm scale/shift per layer")
        c_prev = None
        for l, w in enumerate(self.mix):
            if w.ndim != 2 or (c_prev is not None and w.shape[0] != c_prev):
                raise ValueError(f"mixing matrix {l} breaks the channel chain")
            c_prev = w.shape[1]
            if self.norm_scale[l].shape != (c_prev,) or self.norm_shift[l].shape != (c_prev,):
                raise ValueError(f"norm parameters of layer {l} must have shape ({c_prev},)")
        if self.final_mix.shape != (c_prev, 1):
            raise ValueError(f"final mixing matrix must have shape ({c_prev}, 1)")
        if self.out_scale <= 0:
            raise ValueError("out_scale must be positive")

    @property
    def num_layers(self):
        return len(self.mix)

    def blocks(self) -> dict:
        out = {}
        for l in range(self.num_layers):
            out[f"mix{l}"] = self.mix[l]
            out[f"norm_scale{l}"] = self.norm_scale[l]
            out[f"norm_shift{l}"] = self.norm_shift[l]
        out["final_mix"] = self.final_mix
        return out

    def copy(self) -> "DeepDecoderParams":
        return DeepDecoderParams([w.copy() for w in self.mix], [s.copy() for s in self.norm_scale],
                                 [s.copy() for s in self.norm_shift], self.final_mix.copy(),
                                 self.out_scale, self.out_shift)

    def check_spec(self, spec: LatentSpec):
        if self.num_layers != spec.num_layers or self.mix[0].shape[0] != spec.c0:
            raise ValueError("decoder parameters do not match the latent spec")


def init_decoder(spec: LatentSpec, rng: RngState, out_range=(0.0, 1.0), dtype=np.float64) -> DeepDecoderParams:
    mix = []
    c_in = spec.c0
    for _ in range(spec.num_layers):
        mix.append(sample_standard_normal(rng, (c_in, spec.channels), dtype) / dtype(math.sqrt(c_in)))
        c_in = spec.channels
    final = sample_standard_normal(rng, (c_in, 1), dtype) / dtype(math.sqrt(c_in))
    lo, hi = out_range
    return DeepDecoderParams(
        mix=mix,
        norm_scale=[np.ones(spec.channels, dtype) for _ in range(spec.num_layers)],
        norm_shift=[np.zeros(spec.channels, dtype) for _ in range(spec.num_layers)],
        final_mix=final, out_scale=float(hi - lo), out_shift=float(lo))


@dataclass
class DecoderCache:
    latent: np.ndarray
    layers: list = field(default_factory=list)
    final_input: np.ndarray | None = None
    sig: np.ndarray | None = None
    used: bool = False


def decoder_forward(theta: DeepDecoderParams, latent: np.ndarray, spec: LatentSpec):
    """Decode one latent tensor into a ``(nz, nx)`` grid. Returns ``(grid, cache)``."""
    if latent.shape != spec.latent_shape:
        raise ValueError(f"latent shape {latent.shape} does not match {spec.latent_shape}")
    dtype = latent.dtype.type
    cache = DecoderCache(latent=latent)
    h = latent
    for l in range(theta.num_layers):
        w = theta.mix[l]
        c, hh, ww = h.shape
        u = (w.T @ h.reshape(c, -1)).reshape(w.shape[1], hh, ww)
        r = np.maximum(u, 0)
        H, W = spec.sizes[l]
        rh = resize_matrix(hh, H, latent.dtype)
        rw = resize_matrix(ww, W, latent.dtype)
        v = (rh @ r) @ rw.T
        mu = v.mean(axis=(1, 2), keepdims=True)
        d = v - mu
        std = np.sqrt((d * d).mean(axis=(1, 2), keepdims=True))
        xhat = d / (std + dtype(NORM_EPS))
        cache.layers.append((h, u, xhat, d, std))
        h = xhat * theta.norm_scale[l][:, None, None] + theta.norm_shift[l][:, None, None]
    cache.final_input = h
    o = np.tensordot(theta.final_mix[:, 0], h, axes=(0, 0))
    sig = expit(o)
    cache.sig = sig
    out = dtype(theta.out_shift) + dtype(theta.out_scale) * sig
    return check_finite(out, "decoder output"), cache


def decoder_backward(theta: DeepDecoderParams, cache: DecoderCache, grad_output: np.ndarray,
                     spec: LatentSpec):
    """Reverse pass. Returns ``(grad_theta, grad_latent)``; ``grad_theta`` keyed like ``theta.blocks()``."""
    if cache.used:
        raise RuntimeError("decoder cache already consumed by a backward pass")
    cache.used = True
    dtype = grad_output.dtype.type
    grads = {}
    sig = cache.sig
    go = grad_output * dtype(theta.out_scale) * sig * (1 - sig)
    h = cache.final_input
    grads["final_mix"] = np.tensordot(h, go, axes=((1, 2), (0, 1)))[:, None]
    gh = theta.final_mix[:, 0][:, None, None] * go[None]
    for l in reversed(range(theta.num_layers)):
        inp, u, xhat, d, std = cache.layers[l]
        c_in, hh, ww = inp.shape
        H, W = spec.sizes[l]
        grads[f"norm_shift{l}"] = gh.sum(axis=(1, 2))
        grads[f"norm_scale{l}"] = (gh * xhat).sum(axis=(1, 2))
        gx = gh * theta.norm_scale[l][:, None, None]
        denom = std + dtype(NORM_EPS)
        npix = H * W
        gd = gx / denom
        dot = (gx * d).sum(axis=(1, 2), keepdims=True)
        safe_std = np.where(std > 0, std, 1)
        gd -= np.where(std > 0, dot / (denom * denom) / (npix * safe_std), 0) * d
        gv = gd - gd.mean(axis=(1, 2), keepdims=True)
        rh = resize_matrix(hh, H, gv.dtype)
        rw = resize_matrix(ww, W, gv.dtype)
        gr = rh.T @ (gv @ rw)
        gu = gr * (u > 0)
        gu_flat = gu.reshape(gu.shape[0], -1)
        grads[f"mix{l}"] = inp.reshape(c_in, -1) @ gu_flat.T
        gh = (theta.mix[l] @ gu_flat).reshape(c_in, hh, ww)
    return grads, gh


@dataclass
class GmmParams:
    """Diagonal Gaussian mixture over the latent; weights are fixed."""

    means: np.ndarray
    log_stds: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.means.shape[0] == 0:
            raise ValueError("mixture needs at least one component")
        if self.means.shape != self.log_stds.shape or self.weights.shape != (self.means.shape[0],):
            raise ValueError("inconsistent mixture parameter shapes")
        if np.any(self.weights < 0) or abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("mixture weights must be non-negative and sum to 1")

    @property
    def K(self):
        return self.means.shape[0]

    def blocks(self) -> dict:
        return {"means": self.means, "log_stds": self.log_stds}

    def copy(self) -> "GmmParams":
        return GmmParams(self.means.copy(), self.log_stds.copy(), self.weights.copy())


def init_gmm(spec: LatentSpec, K: int = 3, dtype=np.float64) -> GmmParams:
    if K < 1:
        raise ValueError("K must be >= 1")
    shape = (K,) + spec.latent_shape
    return GmmParams(np.zeros(shape, dtype), np.zeros(shape, dtype), np.full(K, 1.0 / K))


def gmm_sample(phi: GmmParams, z: np.ndarray, rng: RngState, component: int | None = None):
    """Reparameterized mixture draw: ``mu_k + exp(log_std_k) * z`` with ``k`` drawn from the weights."""
    if phi.K == 0:
        raise ValueError("mixture has no components")
    if z.shape != phi.means.shape[1:]:
        raise ValueError(f"z shape {z.shape} does not match latent {phi.means.shape[1:]}")
    if component is None:
        component = 0 if phi.K == 1 else int(rng.generator.choice(phi.K, p=phi.weights))
    k = component
    latent = phi.means[k] + np.exp(phi.log_stds[k]) * z
    return latent, k


def gmm_backward(phi: GmmParams, z: np.ndarray, component_index: int, grad_latent: np.ndarray) -> dict:
    if not 0 <= component_index < phi.K:
        raise IndexError(f"component {component_index} out of range for K={phi.K}")
    k = component_index
    g_means = np.zeros_like(phi.means)
    g_logs = np.zeros_like(phi.log_stds)
    g_means[k] = grad_latent
    g_logs[k] = grad_latent * np.exp(phi.log_stds[k]) * z
    return {"means": g_means, "log_stds": g_logs}


def generate(theta, phi, spec, rng: RngState, z=None, component=None):
    """Draw one model grid ``G(q(z))``; returns ``(grid, cache, z, k)``."""
    if z is None:
        z = sample_standard_normal(rng, spec.latent_shape, phi.means.dtype)
    latent, k = gmm_sample(phi, z, rng, component)
    grid, cache = decoder_forward(theta, latent, spec)
    return grid, cache, z, k


def generate_backward(theta, phi, spec, cache, z, k, grad_output):
    """Chain decoder and mixture gradients for one draw."""
    g_theta, g_latent = decoder_backward(theta, cache, grad_output, spec)
    return g_theta, gmm_backward(phi, z, k, g_latent)


def sample_posterior(theta, phi, spec, rng: RngState, S: int) -> list:
    if S < 1:
        raise ValueError("S must be >= 1")
    return [generate(theta, phi, spec, rng)[0] for _ in range(S)]
