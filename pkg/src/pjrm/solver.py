"""Inversion drivers: joint weak/strong formulations and the independent baseline.

The weak formulation alternates two loops. The outer loop takes a gradient
step on each survey's image estimate ``x_i`` against

    0.5/sigma**2 * ||A_i x_i - y_i||**2 + 0.5/gamma**2 * ||x_i - G(q_i(z_i))||**2

and is the only place the forward operator is touched. The inner loop fits the
generator (decoder weights plus per-survey mixtures) to the frozen ``x_i`` with
ADAM. The strong formulation runs ADAM directly on the data misfit of the
generated models. In joint mode one decoder is shared by every survey; in
independent mode each survey owns its decoder.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .decoder import (DeepDecoderParams, GmmParams, LatentSpec, generate, generate_backward,
                      init_decoder, init_gmm, sample_posterior)
from .kernel import AdamState, RngState, adam_step, power_iteration_norm, sample_standard_normal
from .operator import PoststackOperator, SurveyData, data_misfit_gradient

log = logging.getLogger(__name__)

# stream labels, derived from the master seed
STREAM_THETA = 1
STREAM_OUTER = 2
STREAM_INNER = 3
STREAM_POSTERIOR = 4
STREAM_FROZEN = 5
STREAM_NORM = 6


@dataclass
class SolverConfig:
    mode: str = "joint"  # joint | independent
    formulation: str = "weak"  # weak | strong
    n_surveys: int = 2
    sigma: float | None = None  # None: noise std recorded on the surveys
    gamma: float | None = None  # None: 0.1 x dynamic range of the initial images
    tau: float | None = None  # None: default_step_size
    maxiter1: int = 200
    maxiter2: int = 500
    strong_steps: int | None = None  # None: maxiter1 * maxiter2
    lr: float = 1e-3
    n_samples: int = 64
    seed: int = 0
    num_layers: int = 4
    channels: int = 32
    latent_ratio: int = 16
    n_components: int = 3
    frozen_latents: bool = False
    paired_latents: bool = False  # posterior draws share z and component across surveys
    dtype: str = "float32"
    out_range: tuple = (2.0, 6.0)

    def __post_init__(self):
        if self.mode not in ("joint", "independent"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.formulation not in ("weak", "strong"):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        for name in ("n_surveys", "maxiter1", "maxiter2", "n_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("sigma", "gamma", "tau"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def steps(self):
        return self.strong_steps if self.strong_steps is not None else self.maxiter1 * self.maxiter2

    def latent_spec(self, nz, nx) -> LatentSpec:
        return LatentSpec.default(nz, nx, self.num_layers, self.channels, self.latent_ratio)


@dataclass
class InversionState:
    config: SolverConfig
    spec: LatentSpec
    x: list
    thetas: list  # one entry in joint mode
    phis: list
    adam: AdamState
    sigma: float
    gamma: float
    tau: float
    rng: RngState
    frozen: list | None = None
    trace: list = field(default_factory=list)
    outer_iter: int = 0
    inner_iter: int = 0
    network_updates: int = 0
    streams: dict = field(default_factory=dict, repr=False)
    blocks: dict = field(default_factory=dict, repr=False)

    def theta(self, i) -> DeepDecoderParams:
        return self.thetas[0] if self.config.mode == "joint" else self.thetas[i]

    def survey_rng(self, purpose, i) -> RngState:
        key = (purpose, i)
        if key not in self.streams:
            self.streams[key] = self.rng.derive(purpose).derive(i + 1)
        return self.streams[key]

    def param_blocks(self) -> dict:
        if not self.blocks:
            for i, th in enumerate(self.thetas):
                prefix = self.theta_prefix(i)
                for k, v in th.blocks().items():
                    self.blocks[prefix + k] = v
            for i, phi in enumerate(self.phis):
                for k, v in phi.blocks().items():
                    self.blocks[f"phi{i + 1}/{k}"] = v
        return self.blocks

    def theta_prefix(self, i):
        return "theta/" if self.config.mode == "joint" else f"theta{i + 1}/"


@dataclass
class InversionResult:
    samples: list  # per survey, array (S, nz, nx)
    x: list
    thetas: list
    phis: list
    trace: list
    forward_op_calls: int
    setup_op_calls: int
    network_updates: int
    sigma: float
    gamma: float
    tau: float
    config: SolverConfig

    def posterior_mean(self, i):
        return self.samples[i].mean(axis=0)


def _survey_grid(d):
    return d.grid if isinstance(d, SurveyData) else d


def _count(ops):
    return sum(op.counter.value for op in {id(op): op for op in ops}.values())


def default_step_size(ops, sigma: float, gamma: float, rng: RngState | None = None, iters: int = 50) -> float:
    """``0.9 * 2 / L`` with ``L = max ||A_i||**2 / sigma**2 + 1 / gamma**2``."""
    rng = rng or RngState(0, STREAM_NORM)
    norms = []
    for idx, op in enumerate(ops):
        norms.append(power_iteration_norm(op.forward, op.adjoint, op.shape, iters, rng.derive(idx)))
    lip = max(norms) ** 2 / sigma**2 + 1.0 / gamma**2
    return 0.9 * 2.0 / lip


def initialize_state(config: SolverConfig, ops, data, rng: RngState | None = None) -> InversionState:
    """Scaled-adjoint images ``x_i = c A^T y_i + offset`` and freshly initialized generators."""
    rng = rng or RngState(config.seed)
    if len(ops) != config.n_surveys or len(data) != config.n_surveys:
        raise ValueError("need one operator and one survey per survey index")
    dtype = config.np_dtype
    nz, nx = ops[0].shape
    spec = config.latent_spec(nz, nx)

    # constants are invisible to the depth derivative, so lifting the scaled
    # adjoint image to the middle of the decoder range leaves A x unchanged
    offset = 0.5 * (config.out_range[0] + config.out_range[1])
    x = []
    for op, d in zip(ops, data):
        y = _survey_grid(d).astype(dtype)
        aty = op.adjoint(y)
        aaty = op.forward(aty)
        n = np.linalg.norm(aaty)
        c = np.linalg.norm(y) / n if n > 0 else 0.0
        x.append((aty * dtype.type(c) + dtype.type(offset)).astype(dtype))

    if config.sigma is not None:
        sigma = config.sigma
    else:
        sigmas = [d.noise_sigma for d in data if isinstance(d, SurveyData)]
        if not sigmas or max(sigmas) <= 0:
            raise ValueError("sigma not configured and surveys carry no noise level")
        sigma = float(max(sigmas))
    if config.gamma is not None:
        gamma = config.gamma
    else:
        span = float(max(xi.max() for xi in x) - min(xi.min() for xi in x))
        gamma = 0.1 * span if span > 0 else 1.0
    tau = config.tau if config.tau is not None else default_step_size(ops, sigma, gamma)

    theta_rng = rng.derive(STREAM_THETA)
    n_theta = 1 if config.mode == "joint" else config.n_surveys
    thetas = [init_decoder(spec, theta_rng.derive(i + 1), config.out_range, dtype.type) for i in range(n_theta)]
    phis = [init_gmm(spec, config.n_components, dtype.type) for _ in range(config.n_surveys)]

    state = InversionState(config, spec, x, thetas, phis, AdamState(), sigma, gamma, tau, rng)
    if config.frozen_latents:
        state.frozen = []
        for i in range(config.n_surveys):
            frng = rng.derive(STREAM_FROZEN).derive(i + 1)
            z = sample_standard_normal(frng, spec.latent_shape, dtype)
            k = 0 if phis[i].K == 1 else int(frng.generator.choice(phis[i].K, p=phis[i].weights))
            state.frozen.append((z, k))
    return state


def _draw(state, i, purpose):
    z, k = state.frozen[i] if state.frozen is not None else (None, None)
    return generate(state.theta(i), state.phis[i], state.spec, state.survey_rng(purpose, i), z, k)


def outer_gradient_step(state: InversionState, i: int, op: PoststackOperator, y) -> np.ndarray:
    """One proximal-data gradient step on ``x_i``; exactly two operator calls."""
    x = state.x[i]
    y = _survey_grid(y)
    dt = x.dtype.type
    g_data = data_misfit_gradient(op, x, y, state.sigma)
    gen = _draw(state, i, STREAM_OUTER)[0]
    diff = x - gen
    g_prox = diff / dt(state.gamma**2)
    if not np.all(np.isfinite(g_prox)):
        raise FloatingPointError(f"non-finite proximity gradient for survey {i + 1}")
    g = g_data + g_prox
    if not np.all(np.isfinite(g)):
        raise FloatingPointError(f"non-finite outer gradient for survey {i + 1}")
    x -= dt(state.tau) * g
    state.trace.append((state.outer_iter, -1, i + 1, "proximity",
                        float(0.5 * np.sum(diff.astype(np.float64) ** 2) / state.gamma**2)))
    return x


def _accumulate(grads, prefix, g):
    for k, v in g.items():
        key = prefix + k
        if key in grads:
            grads[key] += v
        else:
            grads[key] = v


def inner_training_epoch(state: InversionState) -> float:
    """One ADAM update of every generator parameter on the summed proximity loss."""
    total = 0.0
    grads = {}
    g2 = state.gamma**2
    for j in range(state.config.n_surveys):
        gen, cache, z, k = _draw(state, j, STREAM_INNER)
        r = gen - state.x[j]
        loss = 0.5 * float(np.sum(r.astype(np.float64) ** 2)) / g2
        g_theta, g_phi = generate_backward(state.theta(j), state.phis[j], state.spec, cache, z, k,
                                           r / r.dtype.type(g2))
        _accumulate(grads, state.theta_prefix(j), g_theta)
        _accumulate(grads, f"phi{j + 1}/", g_phi)
        total += loss
    if not np.isfinite(total):
        raise FloatingPointError(f"non-finite proximity loss at inner epoch {state.inner_iter}")
    adam_step(state.param_blocks(), grads, state.adam, state.config.lr)
    state.trace.append((state.outer_iter, state.inner_iter, 0, "proximity", total))
    state.inner_iter += 1
    state.network_updates += 1
    return total


def strong_step(state: InversionState, ops, data) -> float:
    """One ADAM update on ``sum_i ||A_i G(q_i(z_i)) - y_i||**2``; ``2 N`` operator calls."""
    total = 0.0
    grads = {}
    for j in range(state.config.n_surveys):
        gen, cache, z, k = _draw(state, j, STREAM_INNER)
        r = ops[j].forward(gen) - _survey_grid(data[j]).astype(gen.dtype)
        total += float(np.sum(r.astype(np.float64) ** 2))
        g_out = 2 * ops[j].adjoint(r)
        g_theta, g_phi = generate_backward(state.theta(j), state.phis[j], state.spec, cache, z, k, g_out)
        _accumulate(grads, state.theta_prefix(j), g_theta)
        _accumulate(grads, f"phi{j + 1}/", g_phi)
    if not np.isfinite(total):
        raise FloatingPointError(f"non-finite data loss at step {state.inner_iter}")
    adam_step(state.param_blocks(), grads, state.adam, state.config.lr)
    state.trace.append((0, state.inner_iter, 0, "data", total))
    state.inner_iter += 1
    state.network_updates += 1
    return total


def _finish(state: InversionState, ops, calls_before, setup_calls) -> InversionResult:
    calls = _count(ops) - calls_before
    samples = []
    for i in range(state.config.n_surveys):
        stream = 0 if state.config.paired_latents else i + 1
        rng = state.rng.derive(STREAM_POSTERIOR).derive(stream)
        draws = sample_posterior(state.theta(i), state.phis[i], state.spec, rng, state.config.n_samples)
        samples.append(np.stack(draws))
    return InversionResult(samples, state.x, state.thetas, state.phis, state.trace, calls, setup_calls,
                           state.network_updates, state.sigma, state.gamma, state.tau, state.config)


def _run_weak(config, ops, data, progress=None):
    before = _count(ops)
    state = initialize_state(config, ops, data)
    start = _count(ops)
    for ii in range(config.maxiter1):
        state.outer_iter = ii
        for i in range(config.n_surveys):
            outer_gradient_step(state, i, ops[i], data[i])
        state.inner_iter = 0
        for _ in range(config.maxiter2):
            inner_training_epoch(state)
        if progress is not None:
            progress(ii, state)
    return _finish(state, ops, start, start - before)


def _run_strong(config, ops, data, progress=None):
    before = _count(ops)
    state = initialize_state(config, ops, data)
    start = _count(ops)
    for step in range(config.steps):
        strong_step(state, ops, data)
        if progress is not None:
            progress(step, state)
    return _finish(state, ops, start, start - before)


def pjrm_weak_solve(config: SolverConfig, ops, data, progress=None) -> InversionResult:
    if config.mode != "joint" or config.formulation != "weak":
        raise ValueError("pjrm_weak_solve needs mode=joint, formulation=weak")
    return _run_weak(config, ops, data, progress)


def pjrm_strong_solve(config: SolverConfig, ops, data, progress=None) -> InversionResult:
    if config.mode != "joint" or config.formulation != "strong":
        raise ValueError("pjrm_strong_solve needs mode=joint, formulation=strong")
    return _run_strong(config, ops, data, progress)


def pirm_solve(config: SolverConfig, ops, data, progress=None) -> InversionResult:
    """Independent recovery: one generator per survey, same budgets as the joint run.

    Surveys draw from their own random streams and ADAM acts element-wise, so
    training the disjoint generators side by side equals training them one
    after another.
    """
    if config.mode != "independent":
        raise ValueError("pirm_solve needs mode=independent")
    run = _run_weak if config.formulation == "weak" else _run_strong
    return run(config, ops, data, progress)


def solve(config: SolverConfig, ops, data, progress=None) -> InversionResult:
    if config.mode == "independent":
        return pirm_solve(config, ops, data, progress)
    if config.formulation == "weak":
        return pjrm_weak_solve(config, ops, data, progress)
    return pjrm_strong_solve(config, ops, data, progress)


def config_echo(config: SolverConfig) -> dict:
    return asdict(config)
