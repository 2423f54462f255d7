"""Run configuration: flat ``key = value`` files covering scenario and solver.

Lines are ``key = value``; ``#`` starts a comment; unknown keys are rejected.
Optional numeric keys accept ``auto``. ``grid = desk`` (default) is a 100x50
window at the paper's cell size; ``grid = paper`` is the full 398x103 model.
Geometry keys left unset follow the chosen grid.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .kernel import RngState
from .scenario import PlumeSchedule, build_layered_background, build_operator, simulate_surveys
from .solver import SolverConfig

GRIDS = {
    "desk": dict(nz=100, nx=50, extent_z_km=0.8, extent_x_km=2.9),
    "paper": dict(nz=398, nx=103, extent_z_km=3.2, extent_x_km=5.9),
}

# scenario stream labels
STREAM_EARTH = 101
STREAM_SURVEYS = 102


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    grid: str = "desk"
    nz: int | None = None
    nx: int | None = None
    extent_z_km: float | None = None
    extent_x_km: float | None = None
    earth_layers: int = 6
    prop_min: float = 2.0
    prop_max: float = 6.0
    peak_freq: float = 15.0
    velocity: float = 3000.0
    noise_sigma: float = 0.005
    n_surveys: int = 2
    injection_z: float | None = None
    injection_x: float | None = None
    plume_radius_z: float | None = None
    plume_radius_x: float | None = None
    plume_amplitude: float = -0.4
    plume_drift: float | None = None
    plume_t_first: float = 0.35
    plume_smoothness: float = 3.0
    mask_threshold: float = 0.05
    mode: str = "joint"
    formulation: str = "weak"
    sigma: float | None = None
    gamma: float | None = None
    tau: float | None = None
    maxiter1: int = 200
    maxiter2: int = 500
    strong_steps: int | None = None
    lr: float = 1e-3
    n_samples: int = 64
    decoder_layers: int = 4
    channels: int = 32
    latent_ratio: int = 16
    n_components: int = 3
    frozen_latents: bool = False
    paired_latents: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.grid not in GRIDS:
            raise ConfigError(f"unknown grid {self.grid!r}; expected one of {sorted(GRIDS)}")
        for key, value in GRIDS[self.grid].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        defaults = dict(injection_z=0.7 * self.nz, injection_x=(self.nx - 1) / 2,
                        plume_radius_z=0.08 * self.nz, plume_radius_x=0.16 * self.nx,
                        plume_drift=0.06 * self.nz)
        for key, value in defaults.items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    def solver_config(self, **overrides) -> SolverConfig:
        kw = dict(mode=self.mode, formulation=self.formulation, n_surveys=self.n_surveys, sigma=self.sigma,
                  gamma=self.gamma, tau=self.tau, maxiter1=self.maxiter1, maxiter2=self.maxiter2,
                  strong_steps=self.strong_steps, lr=self.lr, n_samples=self.n_samples, seed=self.seed,
                  num_layers=self.decoder_layers, channels=self.channels, latent_ratio=self.latent_ratio,
                  n_components=self.n_components, frozen_latents=self.frozen_latents,
                  paired_latents=self.paired_latents, dtype=self.dtype,
                  out_range=(self.prop_min, self.prop_max))
        kw.update(overrides)
        return SolverConfig(**kw)

    def schedule(self) -> PlumeSchedule:
        return PlumeSchedule(self.nz, self.nx, self.injection_z, self.injection_x, self.plume_radius_z,
                             self.plume_radius_x, self.plume_amplitude, self.plume_drift,
                             self.plume_t_first, self.n_surveys, self.plume_smoothness)

    def operator(self):
        return build_operator(self.nz, self.nx, 1000.0 * self.extent_z_km / self.nz,
                              self.peak_freq, self.velocity)

    def earth_model(self):
        rng = RngState(self.seed).derive(STREAM_EARTH)
        return build_layered_background(self.nz, self.nx, self.earth_layers, rng, (self.prop_min, self.prop_max),
                                        self.extent_z_km, self.extent_x_km, margin=abs(self.plume_amplitude) + 0.1)

    def simulate(self):
        """``(model, schedule, op, truths, surveys)`` for this configuration."""
        model = self.earth_model()
        schedule = self.schedule()
        op = self.operator()
        rng = RngState(self.seed).derive(STREAM_SURVEYS)
        truths, surveys = simulate_surveys(model, schedule, op, self.noise_sigma, self.n_surveys, rng,
                                           np.dtype(self.dtype))
        return model, schedule, op, truths, surveys

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {'auto' if v is None else _fmt(v)}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(name, raw: str, annotation):
    hints = typing.get_type_hints(RunConfig)
    tp = hints[name]
    args = typing.get_args(tp)
    optional = type(None) in args
    base = next((a for a in args if a is not type(None)), tp) if args else tp
    if optional and raw.lower() in ("auto", "none"):
        return None
    try:
        if base is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if base is int:
            return int(raw, 0)
        if base is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, **overrides) -> RunConfig:
    known = {f.name: f for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, known[key].type)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> RunConfig:
    return parse_config(Path(path).read_text(), **overrides)


def replace(cfg: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(cfg, **changes)
