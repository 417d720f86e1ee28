"""Fully adapted SMC estimator of the lattice partition function.

The targets grow one (super-)column at a time. Each step computes every
particle's conditional normalizer by forward filtering, resamples
ancestors multinomially in proportion to those normalizers, and draws the
new column exactly from the optimal proposal by backward sampling, so all
particles stay equally weighted. The running estimate of log2 Z is the
first column's exact log2 normalizer plus, per step, the log2 of the mean
normalizer (computed after subtracting the max log-weight).

Randomness: step ``k`` of a run with seed ``s`` draws from a generator
seeded by ``SeedSequence(s, spawn_key=(k,))``. The ancestor uniforms come
first (entry ``i`` belongs to particle ``i``), then an ``(N, M)`` block of
row uniforms whose row ``i`` drives particle ``i``'s backward sweep. All
uniforms exist before any per-particle work starts, so the result does
not depend on the worker count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from rllcap import _kernels
from rllcap.errors import ParameterError, SupportError
from rllcap.model import StripView, as_view

__all__ = [
    "CapacityEstimate",
    "ParticleSystem",
    "RngSpec",
    "capacity_from_log2Z",
    "init",
    "multinomial_ancestors",
    "run",
    "shifted_weights",
    "step",
    "step_generator",
]

_MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class RngSpec:
    seed: int

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed <= _MAX_SEED:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


def _rng_spec(rng) -> RngSpec:
    return rng if isinstance(rng, RngSpec) else RngSpec(int(rng))


def step_generator(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(k,))))


@dataclass
class ParticleSystem:
    view: StripView
    seed: int
    current: np.ndarray
    log2_Z_hat: float
    step: int = 1
    trajectory: list[np.ndarray] | None = None

    @property
    def n_particles(self) -> int:
        return self.current.shape[0]

    def lattices(self) -> np.ndarray:
        """Stored trajectories as an ``(N, rows, cols_so_far)`` bit array."""
        if self.trajectory is None:
            raise ParameterError("trajectory store is off; pass store_trajectory=True")
        blocks = []
        for k, col in enumerate(self.trajectory, 1):
            w = self.view.width_of(k)
            blocks.append((col[:, :, None] >> np.arange(w)[None, None, :]) & 1)
        return np.concatenate(blocks, axis=2).astype(np.uint8)


@dataclass(frozen=True)
class CapacityEstimate:
    log2_Z: float
    capacity: float
    rows: int
    cols: int
    strip_width: int
    n_particles: int
    seed: int
    wall_clock_seconds: float = field(compare=False)
    system: ParticleSystem | None = field(default=None, compare=False, repr=False)


def capacity_from_log2Z(log2_Z: float, rows: int, cols: int) -> float:
    if rows < 1 or cols < 1:
        raise ParameterError("rows and cols must be >= 1")
    return log2_Z / (rows * cols)


def shifted_weights(log2_nu: np.ndarray, shift: float | None = None) -> tuple[np.ndarray, float]:
    """Resampling weights ``2**(log2_nu - shift)``; ``shift`` defaults to the max."""
    log2_nu = np.asarray(log2_nu, dtype=np.float64)
    if shift is None:
        shift = float(np.max(log2_nu))
    if not np.isfinite(shift):
        raise SupportError("every particle has zero conditional support; the estimate collapsed")
    return np.exp2(log2_nu - shift), shift


def log2_mean_increment(weights: np.ndarray, shift: float) -> float:
    return float(np.log2(np.sum(weights)) - np.log2(len(weights)) + shift)


def multinomial_ancestors(weights: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """i.i.d. ancestor indices by inverse CDF; zero-weight particles are never picked."""
    cum = np.cumsum(weights)
    idx = np.searchsorted(cum, uniforms * cum[-1], side="right")
    over = idx >= len(weights)
    if np.any(over):
        idx[over] = np.flatnonzero(weights > 0)[-1]
    return idx


def init(model_or_strip, n_particles: int, rng, store_trajectory: bool = False) -> ParticleSystem:
    """Exact i.i.d. draws of the first (super-)column and its exact log2 normalizer."""
    view = as_view(model_or_strip)
    if not isinstance(n_particles, (int, np.integer)) or n_particles < 1:
        raise ParameterError(f"number of particles must be >= 1, got {n_particles!r}")
    spec = _rng_spec(rng)
    t = view.tables(1)
    zeros = np.zeros((1, view.rows), dtype=np.int64)
    log2_z1 = float(_kernels.lognu(zeros, t.internal[None, :], t.vertical)[0])
    if not np.isfinite(log2_z1):
        raise SupportError("the first column has no configuration of positive weight")
    u = step_generator(spec.seed, 1).random((n_particles, view.rows))
    prev = np.zeros((n_particles, view.rows), dtype=np.int64)
    current = _kernels.sample(prev, t.internal[None, :], t.vertical, u)
    return ParticleSystem(
        view=view,
        seed=spec.seed,
        current=current,
        log2_Z_hat=log2_z1,
        step=1,
        trajectory=[current] if store_trajectory else None,
    )


def step(system: ParticleSystem, k: int | None = None) -> ParticleSystem:
    """Advance every particle by one (super-)column; updates ``system`` in place and returns it."""
    view = system.view
    k = system.step + 1 if k is None else k
    if k != system.step + 1 or not 2 <= k <= view.super_cols:
        raise ParameterError(f"cannot take step {k} from step {system.step}")
    n = system.n_particles
    t = view.tables(k)
    prev_bits = (system.current >> (view.width_of(k - 1) - 1)) & 1

    log2_nu = _kernels.lognu(prev_bits, t.boundary, t.vertical)
    weights, shift = shifted_weights(log2_nu)

    gen = step_generator(system.seed, k)
    ancestors = multinomial_ancestors(weights, gen.random(n))
    u = gen.random((n, view.rows))
    current = _kernels.sample(prev_bits[ancestors], t.boundary, t.vertical, u)

    system.log2_Z_hat += log2_mean_increment(weights, shift)
    system.current = current
    system.step = k
    if system.trajectory is not None:
        system.trajectory = [c[ancestors] for c in system.trajectory] + [current]
    return system


def run(model_or_strip, n_particles: int, rng, store_trajectory: bool = False) -> CapacityEstimate:
    view = as_view(model_or_strip)
    spec = _rng_spec(rng)
    t0 = time.perf_counter()
    system = init(view, n_particles, spec, store_trajectory=store_trajectory)
    for k in range(2, view.super_cols + 1):
        step(system, k)
    elapsed = time.perf_counter() - t0
    base = view.base
    return CapacityEstimate(
        log2_Z=system.log2_Z_hat,
        capacity=capacity_from_log2Z(system.log2_Z_hat, base.rows, base.cols),
        rows=base.rows,
        cols=base.cols,
        strip_width=view.width,
        n_particles=int(n_particles),
        seed=spec.seed,
        wall_clock_seconds=max(elapsed, math.ulp(0.0)),
        system=system if store_trajectory else None,
    )
