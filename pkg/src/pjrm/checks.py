"""Self-verification reports: operator dot-product test and gradient checks."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .decoder import (GmmParams, LatentSpec, decoder_backward, decoder_forward, gmm_backward, gmm_sample,
                      init_decoder, init_gmm)
from .kernel import RngState, finite_difference_gradient, sample_standard_normal
from .operator import PoststackOperator, data_misfit_gradient, ricker_half_width, ricker_wavelet


@dataclass
class CheckLine:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tol)

    def __str__(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<40s} {self.value:.3e}  (tol {self.tol:.0e})"


def dot_product_mismatch(op: PoststackOperator, x: np.ndarray, y: np.ndarray) -> float:
    ax = op.forward(x)
    aty = op.adjoint(y)
    lhs = float(np.dot(ax.ravel().astype(np.float64), y.ravel().astype(np.float64)))
    rhs = float(np.dot(x.ravel().astype(np.float64), aty.ravel().astype(np.float64)))
    return abs(lhs - rhs) / (float(np.linalg.norm(ax)) * float(np.linalg.norm(y)) + 1e-30)


def _test_operator(nz, nx, rng: RngState, dz=8.0):
    dt = 2.0 * dz / 3000.0
    wavelet = ricker_wavelet(15.0, dt, ricker_half_width(15.0, dt))
    return PoststackOperator(nz, nx, wavelet, dz=dz, scale=float(rng.generator.uniform(0.5, 2.0)))


def adjoint_report(n_pairs=100, dtype=np.float64, seed=0, min_shape=(8, 8), max_shape=(398, 103)):
    """Dot-product test on ``n_pairs`` random grids spanning ``min_shape`` .. ``max_shape``."""
    rng = RngState(seed, 0xAD)
    tol = 1e-10 if np.dtype(dtype) == np.float64 else 1e-5
    shapes = [min_shape, max_shape]
    while len(shapes) < n_pairs:
        shapes.append((int(rng.generator.integers(min_shape[0], max_shape[0] + 1)),
                       int(rng.generator.integers(min_shape[1], max_shape[1] + 1))))
    worst, worst_shape = 0.0, None
    for nz, nx in shapes[:n_pairs]:
        op = _test_operator(nz, nx, rng)
        x = sample_standard_normal(rng, (nz, nx), dtype)
        y = sample_standard_normal(rng, (nz, nx), dtype)
        m = dot_product_mismatch(op, x, y)
        if m >= worst:
            worst, worst_shape = m, (nz, nx)
    return [CheckLine(f"adjoint max mismatch ({n_pairs} pairs, worst {worst_shape[0]}x{worst_shape[1]})", worst, tol)]


def _rel(a, b):
    na = np.linalg.norm(a)
    return float(np.linalg.norm(a - b) / na) if na > 0 else float(np.linalg.norm(b))


def tiny_decoder_setup(seed=0, target=(16, 8)):
    """2-layer, 4-channel decoder with an 8x4 latent and randomized parameters (float64)."""
    rng = RngState(seed, 0x6E)
    spec = LatentSpec(4, 8, 4, 2, 4, *target)
    theta = init_decoder(spec, rng, (2.0, 6.0), np.float64)
    for block in theta.blocks().values():
        block += 0.3 * sample_standard_normal(rng, block.shape)
    phi = init_gmm(spec, 2, np.float64)
    phi.means += 0.5 * sample_standard_normal(rng, phi.means.shape)
    phi.log_stds += 0.3 * sample_standard_normal(rng, phi.log_stds.shape)
    return spec, theta, phi, rng


def _block_fd(block, loss, h):
    def f(v):
        saved = block.copy()
        block[...] = v.reshape(block.shape)
        try:
            return loss()
        finally:
            block[...] = saved
    return finite_difference_gradient(f, block.ravel().copy(), h)


def gradient_report(seed=0, h=1e-6):
    lines = []
    rng = RngState(seed, 0x64)

    # (a) data misfit term of the outer step
    op = _test_operator(16, 8, rng)
    x = sample_standard_normal(rng, (16, 8))
    y = op.forward(sample_standard_normal(rng, (16, 8)))
    sigma = 0.7
    g = data_misfit_gradient(op, x, y, sigma)
    fd = finite_difference_gradient(
        lambda v: 0.5 / sigma**2 * np.sum((op.forward(v.reshape(16, 8)) - y) ** 2), x.ravel(), h)
    lines.append(CheckLine("data-misfit gradient", _rel(fd, g.ravel()), 1e-6))

    # (b) decoder blocks and latent
    spec, theta, phi, rng2 = tiny_decoder_setup(seed)
    latent = sample_standard_normal(rng2, spec.latent_shape)
    target = 4.0 + sample_standard_normal(rng2, (spec.target_nz, spec.target_nx))

    def dec_loss(lat=None):
        out, _ = decoder_forward(theta, latent if lat is None else lat, spec)
        return 0.5 * np.sum((out - target) ** 2)

    out, cache = decoder_forward(theta, latent, spec)
    g_theta, g_latent = decoder_backward(theta, cache, out - target, spec)
    for name, block in theta.blocks().items():
        lines.append(CheckLine(f"decoder {name}", _rel(_block_fd(block, dec_loss, h), g_theta[name].ravel()), 1e-6))
    fd = finite_difference_gradient(lambda v: dec_loss(v.reshape(latent.shape)), latent.ravel(), h)
    lines.append(CheckLine("decoder latent", _rel(fd, g_latent.ravel()), 1e-6))

    # (c) mixture reparameterization, frozen component draw
    z = sample_standard_normal(rng2, spec.latent_shape)
    probe = sample_standard_normal(rng2, spec.latent_shape)
    lat, k = gmm_sample(phi, z, rng2)

    def gmm_loss():
        l, _ = gmm_sample(phi, z, rng2, component=k)
        return float(np.sum(probe * l**2))

    g_phi = gmm_backward(phi, z, k, 2 * probe * lat)
    for name, block in phi.blocks().items():
        lines.append(CheckLine(f"gmm {name}", _rel(_block_fd(block, gmm_loss, h), g_phi[name].ravel()), 1e-6))

    # (d) strong formulation chain, two surveys sharing one decoder, frozen draws
    phis = [phi, GmmParams(phi.means[::-1].copy(), phi.log_stds.copy(), phi.weights.copy())]
    op = _test_operator(spec.target_nz, spec.target_nx, rng)
    draws = [(sample_standard_normal(rng2, spec.latent_shape), j % 2) for j in range(2)]
    ys = [op.forward(4.0 + sample_standard_normal(rng2, (spec.target_nz, spec.target_nx))) for _ in range(2)]

    def strong_loss():
        total = 0.0
        for p, (zz, kk), yy in zip(phis, draws, ys):
            l, _ = gmm_sample(p, zz, rng2, component=kk)
            o, _ = decoder_forward(theta, l, spec)
            total += float(np.sum((op.forward(o) - yy) ** 2))
        return total

    g_theta = {k_: np.zeros_like(v) for k_, v in theta.blocks().items()}
    g_phis = []
    for p, (zz, kk), yy in zip(phis, draws, ys):
        l, _ = gmm_sample(p, zz, rng2, component=kk)
        o, c = decoder_forward(theta, l, spec)
        gt, gl = decoder_backward(theta, c, 2 * op.adjoint(op.forward(o) - yy), spec)
        for k_ in g_theta:
            g_theta[k_] += gt[k_]
        g_phis.append(gmm_backward(p, zz, kk, gl))
    analytic, numeric = [], []
    for name, block in theta.blocks().items():
        analytic.append(g_theta[name].ravel())
        numeric.append(_block_fd(block, strong_loss, h))
    for p, gp in zip(phis, g_phis):
        for name, block in p.blocks().items():
            analytic.append(gp[name].ravel())
            numeric.append(_block_fd(block, strong_loss, h))
    lines.append(CheckLine("strong-formulation chain (all blocks)",
                           _rel(np.concatenate(numeric), np.concatenate(analytic)), 1e-5))
    return lines


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
