"""Explicit conditional-density formulas used as analytic oracles.

Covers the Gaussian heat-kernel expectations of the Brownian delta, the
translate solution for state-free coefficients, its geometric (log-space)
analog, and the Cole-Hopf representation for the quadratic self-advection
model.  All functions are pure and vectorized over the spatial argument.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError, MassDeficitWarning
from .model import BrownianPath, DensitySlice, SpaceGrid, TimeGrid

__all__ = [
    "PathFunctionals",
    "BurgersParams",
    "path_functionals",
    "brownian_delta_expectation",
    "brownian_delta_conditional",
    "shift_delta",
    "gbm_delta",
    "antiderivative_from_zero",
    "burgers_k",
    "cole_hopf_phi",
    "burgers_delta",
    "reconstruct_state",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _gaussian(x, center, variance):
    z = (np.asarray(x, dtype=float) - center)
    return np.exp(-0.5 * z * z / variance) / math.sqrt(2.0 * math.pi * variance)


def _density_callable(h) -> Callable:
    return h.density if hasattr(h, "density") else h


# ---------------------------------------------------------------------------
# path functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathFunctionals:
    """Accumulated drift integral A(t_j) and noise integral M(t_j) along a path.

    A uses the trapezoid rule in time, M the left-point (Ito) rule on the
    increments; for constant coefficients A(t) = alpha t and M(t) = beta B(t)
    exactly.
    """

    time_grid: TimeGrid
    drift_integral: np.ndarray
    noise_integral: np.ndarray

    def __post_init__(self):
        n = self.time_grid.n_steps + 1
        if self.drift_integral.shape != (n,) or self.noise_integral.shape != (n,):
            raise InputError("functional arrays must have one entry per knot")


def path_functionals(
    alpha_fn: Callable[[float, Optional[DensitySlice]], float],
    beta_fn: Callable[[float, Optional[DensitySlice]], float],
    path: BrownianPath,
    slices: Optional[Sequence[Optional[DensitySlice]]] = None,
) -> PathFunctionals:
    """Evaluate A(t) = int alpha ds and M(t) = int beta dB along one path.

    ``slices`` supplies the law argument per knot when the coefficients
    consume it; None evaluates them law-free.
    """
    tg = path.time_grid
    n = tg.n_steps
    if slices is None:
        slices = [None] * (n + 1)
    a_vals = np.array([float(alpha_fn(tg.t[j], slices[j])) for j in range(n + 1)])
    b_vals = np.array([float(beta_fn(tg.t[j], slices[j])) for j in range(n + 1)])
    drift = np.concatenate(([0.0], np.cumsum(0.5 * (a_vals[1:] + a_vals[:-1]) * tg.dt)))
    noise = np.concatenate(([0.0], np.cumsum(b_vals[:-1] * path.increments)))
    return PathFunctionals(tg, drift, noise)


# ---------------------------------------------------------------------------
# Brownian delta expectations
# ---------------------------------------------------------------------------

def brownian_delta_expectation(t: float, x, z: float):
    """Heat-kernel value (2 pi t)^{-1/2} exp(-(x-z)^2 / 2t) for t > 0."""
    if t <= 0:
        raise InputError(f"t must be > 0 (singular at t = 0), got {t}")
    return _gaussian(x, z, t)


def brownian_delta_conditional(T: float, t: float, x, b_t: float):
    """Conditional density of B(T) at x given the path up to t < T.

    A Gaussian kernel centered at the current value b_t with variance T - t;
    invariant under joint translation of (x, b_t).
    """
    if not 0 <= t < T:
        raise InputError(f"need 0 <= t < T, got t={t}, T={T}")
    return _gaussian(x, b_t, T - t)


# ---------------------------------------------------------------------------
# translate solutions
# ---------------------------------------------------------------------------

def shift_delta(h, a_t: float, m_t: float, x):
    """h(x - a_t - m_t): the conditional density when coefficients are
    state-free, with a_t and m_t the accumulated drift and noise integrals."""
    f = _density_callable(h)
    return f(np.asarray(x, dtype=float) - a_t - m_t)


def gbm_delta(H, a_t: float, m_t: float, x):
    """(1/x) H(ln x - a_t - m_t) for x > 0: the geometric-model analog.

    ``H`` is the density of the logarithm of the initial state; ``a_t`` is
    the accumulated log-drift integral the caller chose (see the validation
    module for the Ito-corrected choice) and ``m_t`` the noise integral.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise InputError("gbm_delta is defined for x > 0 only")
    f = _density_callable(H)
    return f(np.log(x_arr) - a_t - m_t) / x_arr


# ---------------------------------------------------------------------------
# Cole-Hopf chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BurgersParams:
    """Quadratic self-advection parameters; gamma = -beta^2 / (2 alpha)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha == 0.0 or self.beta == 0.0:
            raise InputError("BurgersParams requires alpha != 0 and beta != 0")

    @property
    def gamma(self) -> float:
        return -self.beta * self.beta / (2.0 * self.alpha)


def antiderivative_from_zero(h, span: float = 16.0, tol: float = 1e-10, max_points: int = 2 ** 21):
    """Vectorized H0(x) = int_0^x h(y) dy, signed for x < 0.

    Cumulative trapezoid on a symmetric table refined until two consecutive
    resolutions agree within ``tol``; evaluation clamps to the table ends.
    """
    f = _density_callable(h)
    n = 4096
    prev = None
    while True:
        xs = np.linspace(-span, span, n + 1)
        vals = np.asarray(f(xs), dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * (xs[1] - xs[0]))))
        mid = cum[n // 2]
        table = cum - mid  # anchored at x = 0 (n even keeps a node there)
        if prev is not None:
            on_prev = np.interp(prev[0], xs, table)
            if np.max(np.abs(on_prev - prev[1])) < tol:
                break
        if 2 * n > max_points:
            break
        prev = (xs, table)
        n *= 2

    def h0(x):
        return np.interp(np.asarray(x, dtype=float), xs, table)

    return h0


def burgers_k(h, gamma: float, x):
    """Initial condition k(x) = exp(H0(x) / gamma) of the transformed heat
    equation, with H0 the signed antiderivative of the density h."""
    if gamma == 0.0:
        raise InputError("gamma must be nonzero")
    h0 = antiderivative_from_zero(h)
    return np.exp(h0(np.asarray(x, dtype=float)) / gamma)


def cole_hopf_phi(
    k: Callable,
    beta: float,
    t: float,
    b_t: float,
    x,
    *,
    order: int = 64,
    k_deriv: Optional[Callable] = None,
):
    """Gauss-Hermite evaluation of phi(t, x) = E[k(x - beta b_t + beta W)],
    W ~ N(0, t), together with its spatial derivative.

    ``k_deriv`` supplies an analytic derivative of k; otherwise phi_x uses a
    central difference of k with step 1e-5 x scale under the same quadrature
    (k may be a tabulated map).  Returns (phi, phi_x) matching the shape of x.
    """
    if t < 0:
        raise InputError(f"t must be >= 0, got {t}")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    center = x_arr - beta * b_t

    if t == 0.0:
        phi = np.asarray(k(center), dtype=float)
        if k_deriv is not None:
            phi_x = np.asarray(k_deriv(center), dtype=float)
        else:
            delta = 1e-5 * np.maximum(1.0, np.abs(x_arr))
            phi_x = (np.asarray(k(center + delta)) - np.asarray(k(center - delta))) / (2.0 * delta)
    else:
        nodes, weights = np.polynomial.hermite.hermgauss(order)
        arg = center[:, None] + beta * math.sqrt(2.0 * t) * nodes[None, :]
        w = weights / math.sqrt(math.pi)
        phi = np.asarray(k(arg), dtype=float) @ w
        if k_deriv is not None:
            phi_x = np.asarray(k_deriv(arg), dtype=float) @ w
        else:
            delta = (1e-5 * np.maximum(1.0, np.abs(x_arr)))[:, None]
            phi_x = ((np.asarray(k(arg + delta)) - np.asarray(k(arg - delta))) / (2.0 * delta)) @ w

    if not np.all(np.isfinite(phi)) or np.any(phi <= 0.0):
        bad = np.argmin(phi)
        raise InputError(
            f"quadrature produced non-positive or non-finite phi "
            f"(min {phi[bad]:.3g} at x={x_arr[bad]:.3g}, t={t}, order={order})"
        )
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(phi[0]), float(phi_x[0])
    return phi, phi_x


def burgers_delta(h, params: BurgersParams, t: float, b_t: float, x, *, order: int = 64):
    """Conditional density gamma phi_x / phi of the quadratic self-advection
    model, via the Cole-Hopf representation.

    At t = 0 the chain telescopes back to h exactly.  The derivative of k is
    supplied analytically (k' = k h / gamma), so no finite-difference error
    enters.
    """
    gamma = params.gamma
    h_fn = _density_callable(h)
    h0 = antiderivative_from_zero(h)

    def k(z):
        return np.exp(h0(z) / gamma)

    def k_deriv(z):
        return k(z) * h_fn(z) / gamma

    phi, phi_x = cole_hopf_phi(k, params.beta, t, b_t, x, order=order, k_deriv=k_deriv)
    return gamma * phi_x / phi


# ---------------------------------------------------------------------------
# state reconstruction
# ---------------------------------------------------------------------------

def reconstruct_state(slice_values: np.ndarray, grid: SpaceGrid, *, mass_tol: float = 1e-4) -> float:
    """First moment of a density slice: the state the density represents.

    Trapezoid quadrature of x m(x); a mass deficit beyond ``mass_tol``
    attaches a MassDeficitWarning to the result.
    """
    slice_values = np.asarray(slice_values, dtype=float)
    if slice_values.shape != (grid.n_points,):
        raise InputError("slice does not live on the given grid")
    total = float(np.trapezoid(slice_values, dx=grid.dx))
    if abs(total - 1.0) > mass_tol:
        warnings.warn(
            f"slice mass {total:.6f} deviates from 1 beyond {mass_tol}",
            MassDeficitWarning,
            stacklevel=2,
        )
    return float(np.trapezoid(grid.x * slice_values, dx=grid.dx))
