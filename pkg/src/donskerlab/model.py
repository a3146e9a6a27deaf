"""Model families, grids, initial laws and seeded Brownian paths.

Everything here is immutable after construction and safe to share across
workers; all sampling is a pure function of (arguments, seed).

Well-posedness caveats are the caller's responsibility: coefficient
boundedness is deliberately not enforced (the geometric and quadratic-drift
families use unbounded drift), only domain and sign constraints are checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from .errors import InputError

__all__ = [
    "SpaceGrid",
    "TimeGrid",
    "BrownianPath",
    "DensitySlice",
    "DiracLaw",
    "GaussianLaw",
    "LogNormalLaw",
    "TabulatedLaw",
    "InitialLaw",
    "ConstantCoefficients",
    "StateFreeCoefficients",
    "MeanFieldGBM",
    "BurgersDrift",
    "GeneralCoefficients",
    "CoefficientModel",
    "sample_brownian_path",
    "sample_initial",
    "eval_coefficients",
    "substream_seed",
    "substream_rng",
]

TABULATED_MASS_TOL = 1e-8


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceGrid:
    """Uniform spatial lattice of ``n_cells`` intervals spanning [x_min, x_max].

    Field values live on the n_cells + 1 nodes so that the trapezoid rule
    integrates a constant slice exactly over the full width.
    """

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 1:
            raise InputError(f"n_cells must be >= 1, got {self.n_cells}")
        if not self.x_min < self.x_max:
            raise InputError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_cells + 1)

    @property
    def n_points(self) -> int:
        return self.n_cells + 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time lattice with knots t_0 = 0 < ... < t_n = horizon."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if self.horizon <= 0:
            raise InputError(f"horizon must be > 0, got {self.horizon}")
        if self.n_steps < 1:
            raise InputError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @cached_property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


# ---------------------------------------------------------------------------
# Brownian paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BrownianPath:
    """One realization of the common driving noise on a time grid.

    ``seed`` is None for paths derived from another path (e.g. coarsened);
    sampled paths regenerate bit-identically from their seed.
    """

    time_grid: TimeGrid
    increments: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        if self.increments.shape != (self.time_grid.n_steps,):
            raise InputError(
                f"increments shape {self.increments.shape} does not match "
                f"n_steps {self.time_grid.n_steps}"
            )
        self.increments.setflags(write=False)

    @cached_property
    def values(self) -> np.ndarray:
        """B at every knot; B(t_0) = 0."""
        out = np.empty(self.time_grid.n_steps + 1)
        out[0] = 0.0
        np.cumsum(self.increments, out=out[1:])
        out.setflags(write=False)
        return out

    def coarsen(self, factor: int) -> "BrownianPath":
        """Pairwise-sum increments into a path on a factor-times-coarser grid."""
        n = self.time_grid.n_steps
        if factor < 1 or n % factor:
            raise InputError(f"factor {factor} does not divide n_steps {n}")
        coarse = TimeGrid(self.time_grid.horizon, n // factor)
        inc = self.increments.reshape(n // factor, factor).sum(axis=1)
        return BrownianPath(coarse, inc, seed=None)


def sample_brownian_path(time_grid: TimeGrid, seed: int) -> BrownianPath:
    """Draw independent N(0, dt) increments; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    inc = rng.normal(0.0, math.sqrt(time_grid.dt), size=time_grid.n_steps)
    return BrownianPath(time_grid, inc, seed=int(seed))


def substream_seed(master_seed: int, *key: int) -> int:
    """Deterministic child seed for stream ``key`` of a master seed.

    Used to keep paths, initial draws and repetitions on independent streams
    regardless of execution order or worker count.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def substream_rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(substream_seed(master_seed, *key))


# ---------------------------------------------------------------------------
# density slices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensitySlice:
    """Grid values of a density at one instant, the object coefficient
    functionals consume."""

    grid: SpaceGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.n_points,):
            raise InputError(
                f"slice length {self.values.shape} does not match grid "
                f"({self.grid.n_points} nodes)"
            )

    def at(self, x) -> np.ndarray:
        """Pointwise value by linear interpolation, zero outside the grid."""
        return np.interp(x, self.grid.x, self.values, left=0.0, right=0.0)

    def mass(self) -> float:
        return float(np.trapezoid(self.values, dx=self.grid.dx))

    def mean(self) -> float:
        return float(np.trapezoid(self.grid.x * self.values, dx=self.grid.dx))


# ---------------------------------------------------------------------------
# initial laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiracLaw:
    """Point mass at x0. Supports sampling only; mollify before density use."""

    x0: float

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.full(n, self.x0)

    def density(self, x):
        raise InputError("a point mass has no density; mollify it first")

    def mollified(self, eps: float) -> "GaussianLaw":
        if eps <= 0:
            raise InputError(f"mollifier width must be > 0, got {eps}")
        return GaussianLaw(self.x0, eps * eps)


@dataclass(frozen=True)
class GaussianLaw:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise InputError(f"variance must be > 0, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mean, self.std, size=n)

    def density(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.std
        return np.exp(-0.5 * z * z) / (self.std * math.sqrt(2.0 * math.pi))

    def mollified(self, eps: float) -> "GaussianLaw":
        return self


@dataclass(frozen=True)
class LogNormalLaw:
    """exp(N(mu, sigma^2)); the state law of a geometric model started at Z > 0."""

    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise InputError(f"sigma must be > 0, got {self.sigma}")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.exp(rng.normal(self.mu, self.sigma, size=n))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        z = (np.log(x[pos]) - self.mu) / self.sigma
        out[pos] = np.exp(-0.5 * z * z) / (x[pos] * self.sigma * math.sqrt(2.0 * math.pi))
        return out

    def log_law(self) -> GaussianLaw:
        """Law of the logarithm, the density H used by geometric closed forms."""
        return GaussianLaw(self.mu, self.sigma * self.sigma)

    def mollified(self, eps: float) -> "LogNormalLaw":
        return self


@dataclass(frozen=True)
class TabulatedLaw:
    """Density given by grid values; must be nonnegative with unit trapezoid mass."""

    grid: SpaceGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise InputError("tabulated values must match the grid nodes")
        if np.any(v < 0):
            raise InputError("tabulated density has negative entries")
        m = float(np.trapezoid(v, dx=self.grid.dx))
        if abs(m - 1.0) > TABULATED_MASS_TOL:
            raise InputError(f"tabulated density mass {m} deviates from 1 beyond {TABULATED_MASS_TOL}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def density(self, x):
        return np.interp(x, self.grid.x, self.values, left=0.0, right=0.0)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        # inverse-CDF on the trapezoid interpolant, linear within cells
        cdf = np.concatenate(([0.0], np.cumsum((self.values[1:] + self.values[:-1]) * 0.5 * self.grid.dx)))
        cdf /= cdf[-1]
        u = rng.uniform(size=n)
        return np.interp(u, cdf, self.grid.x)

    def mollified(self, eps: float) -> "TabulatedLaw":
        return self


InitialLaw = Union[DiracLaw, GaussianLaw, LogNormalLaw, TabulatedLaw]


def sample_initial(law: InitialLaw, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws from the law; deterministic in the seed and on a stream
    independent of any Brownian path drawn from a different seed."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    return law.sample(n, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# coefficient models
# ---------------------------------------------------------------------------

CoefficientFn = Callable[[float, Optional[DensitySlice]], float]


@dataclass(frozen=True)
class ConstantCoefficients:
    """dX = alpha dt + beta dB."""

    alpha: float
    beta: float


@dataclass(frozen=True)
class StateFreeCoefficients:
    """Drift and diffusion depend on (t, law) but not on the state."""

    alpha: CoefficientFn
    beta: CoefficientFn


@dataclass(frozen=True)
class MeanFieldGBM:
    """dX = alpha(t, law) X dt + beta(t, law) X dB on the positive half-line."""

    alpha: CoefficientFn
    beta: CoefficientFn


@dataclass(frozen=True)
class BurgersDrift:
    """Drift equal to alpha times the conditional density at the state,
    constant diffusion beta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha == 0.0:
            raise InputError("BurgersDrift requires alpha != 0")
        if self.beta == 0.0:
            raise InputError("BurgersDrift requires beta != 0")


@dataclass(frozen=True)
class GeneralCoefficients:
    """Fully general b(t, x, law), sigma(t, x, law); x and returns may be arrays.

    Optional admissible interval; particles leaving it abort the run.
    """

    b: Callable[[float, np.ndarray, Optional[DensitySlice]], np.ndarray]
    sigma: Callable[[float, np.ndarray, Optional[DensitySlice]], np.ndarray]
    domain: tuple = (-math.inf, math.inf)


CoefficientModel = Union[
    ConstantCoefficients,
    StateFreeCoefficients,
    MeanFieldGBM,
    BurgersDrift,
    GeneralCoefficients,
]


def eval_coefficients(model: CoefficientModel, t: float, x, density: Optional[DensitySlice] = None):
    """(drift, diffusion) at (t, x) under the given model.

    ``x`` may be a scalar or an array; the result matches its shape. Models
    that consume the law read the supplied density slice.
    """
    x_arr = np.asarray(x, dtype=float)
    if isinstance(model, ConstantCoefficients):
        shape = np.broadcast(x_arr).shape
        return np.broadcast_to(model.alpha, shape).copy(), np.broadcast_to(model.beta, shape).copy()
    if isinstance(model, StateFreeCoefficients):
        a = float(model.alpha(t, density))
        b = float(model.beta(t, density))
        shape = np.broadcast(x_arr).shape
        return np.full(shape, a), np.full(shape, b)
    if isinstance(model, MeanFieldGBM):
        if np.any(x_arr <= 0):
            raise InputError("MeanFieldGBM is defined for x > 0 only")
        a = float(model.alpha(t, density))
        b = float(model.beta(t, density))
        return a * x_arr, b * x_arr
    if isinstance(model, BurgersDrift):
        if density is None:
            raise InputError("BurgersDrift drift needs the current density slice")
        m_here = density.at(x_arr)
        return model.alpha * m_here, np.full(np.broadcast(x_arr).shape, float(model.beta))
    if isinstance(model, GeneralCoefficients):
        lo, hi = model.domain
        if np.any(x_arr < lo) or np.any(x_arr > hi):
            raise InputError(f"state outside admissible domain [{lo}, {hi}]")
        drift = np.asarray(model.b(t, x_arr, density), dtype=float)
        diff = np.asarray(model.sigma(t, x_arr, density), dtype=float)
        if np.any(diff < 0):
            raise InputError("sigma must be nonnegative on the admissible domain")
        return drift, diff
    raise InputError(f"unknown coefficient model {type(model).__name__}")
