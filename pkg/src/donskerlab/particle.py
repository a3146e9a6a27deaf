"""Interacting particle system sharing one common Brownian path.

The ensemble's empirical measure is the sampling oracle for the conditional
law: all particles see the SAME noise increments, only their initial states
differ.  Euler-Maruyama advances the general families; the geometric family
moves in log coordinates with the exact exponential step, which guarantees
positivity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.special import ndtr

from .errors import DegenerateRunError, InputError
from .fpsolver import DensityField
from .model import (
    BrownianPath,
    BurgersDrift,
    CoefficientModel,
    ConstantCoefficients,
    DensitySlice,
    GeneralCoefficients,
    InitialLaw,
    MeanFieldGBM,
    SpaceGrid,
    StateFreeCoefficients,
)

__all__ = [
    "ParticleEnsemble",
    "EnsembleTrajectory",
    "simulate_particles",
    "empirical_density",
    "conditional_expectation",
    "silverman_bandwidth",
]


@dataclass(frozen=True)
class ParticleEnsemble:
    """Positions of all particles at one time knot."""

    positions: np.ndarray
    time_index: int
    time: float

    def __post_init__(self):
        self.positions.setflags(write=False)

    @property
    def n(self) -> int:
        return self.positions.size

    def mean(self) -> float:
        return float(self.positions.mean())


@dataclass(frozen=True)
class EnsembleTrajectory:
    """Snapshots of the ensemble at stored time knots (every knot by default)."""

    snapshots: tuple
    stored_steps: np.ndarray

    @property
    def final(self) -> ParticleEnsemble:
        return self.snapshots[-1]

    def __len__(self) -> int:
        return len(self.snapshots)


def silverman_bandwidth(positions: np.ndarray) -> float:
    """1.06 std n^{-1/5}: the default kernel width rule."""
    n = positions.size
    return 1.06 * float(np.std(positions)) * n ** (-0.2)


def _binned_density(positions: np.ndarray, grid: SpaceGrid, bandwidth: float) -> np.ndarray:
    """Fast gridded density: linear (cloud-in-cell) deposit, then a Gaussian
    smooth of width ``bandwidth``.  Used for in-loop law closures."""
    n = positions.size
    p = (positions - grid.x_min) / grid.dx
    inside = (p >= 0.0) & (p <= grid.n_cells)
    p = np.clip(p[inside], 0.0, grid.n_cells)
    i0 = np.minimum(p.astype(np.int64), grid.n_cells - 1)
    f = p - i0
    counts = np.bincount(i0, weights=1.0 - f, minlength=grid.n_points)
    counts += np.bincount(i0 + 1, weights=f, minlength=grid.n_points)
    values = counts / (n * grid.dx)
    if bandwidth > 0:
        values = gaussian_filter1d(values, sigma=bandwidth / grid.dx, mode="constant")
    return values


def simulate_particles(
    model: CoefficientModel,
    law: InitialLaw,
    path: BrownianPath,
    n_particles: int,
    seed: int,
    *,
    closure_grid: Optional[SpaceGrid] = None,
    closure_bandwidth: Optional[float] = None,
    drift_field: Optional[DensityField] = None,
    store_stride: int = 1,
) -> EnsembleTrajectory:
    """Advance n conditionally-i.i.d. particles along one common path.

    Initial states are i.i.d. draws from ``law`` (deterministic in ``seed``);
    every particle then uses the same increment dB_j.  Models that consume
    the law read either the ensemble's own binned density on ``closure_grid``
    (the self-consistent closure) or, for the quadratic-drift family, the
    slices of a pre-solved ``drift_field`` when one is supplied.
    """
    if n_particles < 2:
        raise InputError(f"n_particles must be >= 2, got {n_particles}")
    if store_stride < 1:
        raise InputError("store_stride must be >= 1")
    tg = path.time_grid
    dt = tg.dt
    n_steps = tg.n_steps
    rng = np.random.default_rng(seed)
    x = np.asarray(law.sample(n_particles, rng), dtype=float)

    needs_closure = isinstance(model, (StateFreeCoefficients, MeanFieldGBM)) and closure_grid is not None
    if isinstance(model, BurgersDrift) and drift_field is None:
        if closure_grid is None:
            raise InputError("BurgersDrift needs closure_grid (self closure) or drift_field")
        needs_closure = True

    log_space = isinstance(model, MeanFieldGBM)
    if log_space:
        if np.any(x <= 0):
            raise InputError("MeanFieldGBM requires strictly positive initial states")
        state = np.log(x)
    else:
        state = x

    def current_positions():
        return np.exp(state) if log_space else state

    def current_slice(j):
        if isinstance(model, BurgersDrift) and drift_field is not None:
            row = int(np.searchsorted(drift_field.stored_steps, j))
            return drift_field.slice_at(row)
        if needs_closure:
            bw = closure_bandwidth
            pos = current_positions()
            if bw is None:
                bw = silverman_bandwidth(pos)
            return DensitySlice(closure_grid, _binned_density(pos, closure_grid, bw))
        return None

    def snap(j):
        return ParticleEnsemble(current_positions().copy(), j, float(tg.t[j]))

    stored = [0]
    snapshots = [snap(0)]

    for j in range(n_steps):
        t = float(tg.t[j])
        db = float(path.increments[j])
        here = current_slice(j)

        if isinstance(model, ConstantCoefficients):
            state = state + (model.alpha * dt + model.beta * db)
        elif isinstance(model, StateFreeCoefficients):
            a = float(model.alpha(t, here))
            b = float(model.beta(t, here))
            state = state + (a * dt + b * db)
        elif isinstance(model, MeanFieldGBM):
            a = float(model.alpha(t, here))
            b = float(model.beta(t, here))
            state = state + ((a - 0.5 * b * b) * dt + b * db)
        elif isinstance(model, BurgersDrift):
            drift = model.alpha * here.at(state)
            state = state + drift * dt + model.beta * db
        elif isinstance(model, GeneralCoefficients):
            lo, hi = model.domain
            if np.any(state < lo) or np.any(state > hi) or not np.all(np.isfinite(state)):
                raise DegenerateRunError("particle left the admissible domain", j)
            drift = np.asarray(model.b(t, state, here), dtype=float)
            diff = np.asarray(model.sigma(t, state, here), dtype=float)
            state = state + drift * dt + diff * db
        else:
            raise InputError(f"unsupported coefficient model {type(model).__name__}")

        if (j + 1) % store_stride == 0 or j + 1 == n_steps:
            stored.append(j + 1)
            snapshots.append(snap(j + 1))

    return EnsembleTrajectory(tuple(snapshots), np.asarray(sorted(set(stored)), dtype=np.int64))


def empirical_density(
    ensemble: ParticleEnsemble,
    grid: SpaceGrid,
    bandwidth: Optional[float] = None,
    *,
    clip_warn: float = 1e-6,
) -> DensitySlice:
    """Gridded density estimate of the ensemble.

    bandwidth > 0: Gaussian-kernel estimate evaluated exactly at the grid
    nodes; bandwidth = 0: node-centered histogram normalized by N dx;
    bandwidth None: Silverman rule.  Kernel or particle mass falling outside
    the grid is reported through a warning, never renormalized away.
    """
    pos = ensemble.positions
    n = pos.size
    if bandwidth is None:
        bandwidth = silverman_bandwidth(pos)
    if bandwidth < 0:
        raise InputError(f"bandwidth must be >= 0, got {bandwidth}")

    if bandwidth == 0.0:
        idx = np.round((pos - grid.x_min) / grid.dx).astype(np.int64)
        inside = (idx >= 0) & (idx <= grid.n_cells)
        counts = np.bincount(idx[inside], minlength=grid.n_points)
        values = counts / (n * grid.dx)
        clipped = 1.0 - inside.sum() / n
    else:
        x = grid.x
        values = np.zeros(grid.n_points)
        chunk = max(1, int(2e6) // grid.n_points)
        inv = 1.0 / bandwidth
        for start in range(0, n, chunk):
            block = pos[start : start + chunk, None]
            z = (x[None, :] - block) * inv
            values += np.exp(-0.5 * z * z).sum(axis=0)
        values /= n * bandwidth * math.sqrt(2.0 * math.pi)
        below = ndtr((grid.x_min - pos) * inv)
        above = ndtr((pos - grid.x_max) * inv)
        clipped = float((below + above).mean())

    if clipped > clip_warn:
        warnings.warn(
            f"{clipped:.3e} of the ensemble mass lies outside the grid",
            stacklevel=2,
        )
    return DensitySlice(grid, values)


def conditional_expectation(ensemble: ParticleEnsemble, g: Callable) -> float:
    """Particle estimate (1/N) sum g(X_i) of the conditional expectation."""
    vals = np.asarray(g(ensemble.positions), dtype=float)
    if vals.shape != ensemble.positions.shape:
        vals = np.broadcast_to(vals, ensemble.positions.shape)
    if not np.all(np.isfinite(vals)):
        raise InputError("g produced non-finite values on the ensemble")
    return float(vals.mean())
