import math

import numpy as np
import pytest

from donskerlab import (
    BurgersParams,
    GaussianLaw,
    InputError,
    MassDeficitWarning,
    SpaceGrid,
    TimeGrid,
    brownian_delta_conditional,
    brownian_delta_expectation,
    burgers_delta,
    burgers_k,
    cole_hopf_phi,
    gbm_delta,
    path_functionals,
    reconstruct_state,
    sample_brownian_path,
    shift_delta,
)

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
STD_NORMAL = GaussianLaw(0.0, 1.0)


class TestBrownianDeltaExpectation:
    def test_peak_value(self):
        assert brownian_delta_expectation(1.0, 0.0, 0.0) == pytest.approx(INV_SQRT_2PI, abs=1e-12)

    def test_gaussian_tail(self):
        assert brownian_delta_expectation(1.0, 10.0, 0.0) <= 1e-21

    def test_normalization(self):
        x = np.arange(-10.0, 10.0 + 1e-12, 0.01)
        vals = brownian_delta_expectation(0.5, x, 0.0)
        assert np.trapezoid(vals, dx=0.01) == pytest.approx(1.0, abs=1e-8)

    def test_rejects_nonpositive_time(self):
        with pytest.raises(InputError):
            brownian_delta_expectation(0.0, 0.0, 0.0)


class TestBrownianDeltaConditional:
    def test_peak_value(self):
        assert brownian_delta_conditional(2.0, 1.0, 0.0, 0.0) == pytest.approx(INV_SQRT_2PI, abs=1e-12)

    def test_translation_symmetry(self):
        a = brownian_delta_conditional(2.0, 0.5, 1.3, 0.4)
        b = brownian_delta_conditional(2.0, 0.5, 1.3 + 2.2, 0.4 + 2.2)
        assert a == pytest.approx(b, rel=1e-14)

    def test_second_moment_quadrature_and_monte_carlo(self):
        # Gaussian second moment: b_t^2 + (T - t), cross-checked by MC
        b_t, var = 0.5, 1.0
        x = np.linspace(b_t - 14, b_t + 14, 56001)
        vals = brownian_delta_conditional(2.0, 1.0, x, b_t)
        quad = np.trapezoid(x * x * vals, dx=x[1] - x[0])
        assert quad == pytest.approx(1.25, abs=1e-8)
        mc = np.random.default_rng(7).normal(b_t, math.sqrt(var), size=2_000_000)
        assert np.mean(mc * mc) == pytest.approx(1.25, abs=5e-3)

    def test_matches_unconditional_at_t0(self):
        x = np.linspace(-3, 3, 41)
        np.testing.assert_allclose(
            brownian_delta_conditional(1.5, 0.0, x, 0.0),
            brownian_delta_expectation(1.5, x, 0.0),
            rtol=1e-14,
        )

    def test_rejects_bad_times(self):
        with pytest.raises(InputError):
            brownian_delta_conditional(1.0, 1.0, 0.0, 0.0)


class TestShiftDelta:
    def test_recenters(self):
        assert shift_delta(STD_NORMAL, 0.2, 0.3, 0.5) == pytest.approx(INV_SQRT_2PI, abs=1e-12)

    def test_uniform_interior(self):
        def uniform(y):
            y = np.asarray(y)
            return np.where((y >= 0.0) & (y <= 1.0), 1.0, 0.0)

        assert shift_delta(uniform, 0.1, 0.15, 0.5) == pytest.approx(1.0)

    def test_translation_preserves_mass(self):
        g = SpaceGrid(-10.0, 10.0, 2000)
        vals = shift_delta(STD_NORMAL, 0.7, -0.2, g.x)
        assert np.trapezoid(vals, dx=g.dx) == pytest.approx(1.0, abs=1e-8)


class TestGbmDelta:
    def test_unit_point(self):
        assert gbm_delta(STD_NORMAL, 0.0, 0.0, 1.0) == pytest.approx(INV_SQRT_2PI, abs=1e-12)

    def test_at_e(self):
        want = STD_NORMAL.density(1.0) / math.e
        assert gbm_delta(STD_NORMAL, 0.0, 0.0, math.e) == pytest.approx(float(want), rel=1e-12)

    def test_log_substitution_mass(self):
        u = np.linspace(-12.0, 12.0, 24001)
        x = np.exp(u)
        vals = gbm_delta(STD_NORMAL, 0.1, -0.3, x)
        # du-quadrature of m(e^u) e^u recovers unit mass
        assert np.trapezoid(vals * x, dx=u[1] - u[0]) == pytest.approx(1.0, abs=1e-6)

    def test_change_of_variables_identity(self):
        u = np.linspace(-3.0, 3.0, 61)
        left = gbm_delta(STD_NORMAL, 0.2, 0.1, np.exp(u)) * np.exp(u)
        right = shift_delta(STD_NORMAL, 0.2, 0.1, u)
        np.testing.assert_allclose(left, right, rtol=1e-13)

    def test_rejects_nonpositive_x(self):
        with pytest.raises(InputError):
            gbm_delta(STD_NORMAL, 0.0, 0.0, -1.0)


class TestBurgersK:
    def test_empty_integral(self):
        assert burgers_k(STD_NORMAL, -0.5, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_far_right_limit(self):
        # int_0^inf of the standard normal is 1/2 by symmetry
        assert burgers_k(STD_NORMAL, -0.5, 30.0) == pytest.approx(math.exp(-1.0), rel=1e-8)

    def test_gamma_from_params(self):
        assert BurgersParams(1.0, 1.0).gamma == pytest.approx(-0.5)
        assert BurgersParams(-2.0, 1.0).gamma == pytest.approx(0.25)
        with pytest.raises(InputError):
            BurgersParams(0.0, 1.0)


class TestColeHopfPhi:
    def test_zero_time_is_exact(self):
        phi, phi_x = cole_hopf_phi(lambda z: np.cosh(0.3 * z), 1.0, 0.0, 0.0, 0.7)
        assert phi == pytest.approx(math.cosh(0.21), rel=1e-12)

    def test_constant_k(self):
        phi, phi_x = cole_hopf_phi(lambda z: np.ones_like(np.asarray(z, dtype=float)),
                                   1.0, 1.0, 0.4, 0.2)
        assert phi == pytest.approx(1.0, rel=1e-12)
        assert abs(phi_x) < 1e-9

    def test_exponential_moment_identity(self):
        # E[e^{c(x - b + W)}] = e^{c(x-b)} e^{c^2 t / 2}, W ~ N(0, t)
        c, t, b_t, x = 0.3, 1.0, 0.4, 0.0
        phi, phi_x = cole_hopf_phi(lambda z: np.exp(c * z), 1.0, t, b_t, x)
        want = math.exp(c * (x - b_t)) * math.exp(0.5 * c * c * t)
        assert phi == pytest.approx(want, rel=1e-10)
        assert phi == pytest.approx(0.92774348632855, rel=1e-10)
        assert phi_x == pytest.approx(c * want, rel=1e-4)  # central-difference path

    def test_rejects_nonpositive_phi(self):
        with pytest.raises(InputError):
            cole_hopf_phi(lambda z: np.zeros_like(np.asarray(z, dtype=float)) - 1.0,
                          1.0, 0.5, 0.0, 0.0)


class TestBurgersDelta:
    def test_telescopes_to_h_at_t0(self):
        params = BurgersParams(1.0, 1.0)
        x = np.linspace(-5, 5, 201)
        np.testing.assert_allclose(
            burgers_delta(STD_NORMAL, params, 0.0, 0.0, x),
            STD_NORMAL.density(x),
            atol=1e-10,
        )

    def test_mass_telescoping_identity(self):
        params = BurgersParams(1.0, 1.0)
        x = np.arange(-10.0, 10.0 + 1e-9, 0.02)
        vals = burgers_delta(STD_NORMAL, params, 0.5, 0.3, x)
        assert np.trapezoid(vals, dx=0.02) == pytest.approx(1.0, abs=1e-6)


class TestPathFunctionals:
    def test_constant_coefficients_exact(self):
        path = sample_brownian_path(TimeGrid(2.0, 64), 5)
        pf = path_functionals(lambda t, d: 0.3, lambda t, d: 1.5, path)
        assert pf.drift_integral[0] == 0.0 and pf.noise_integral[0] == 0.0
        np.testing.assert_allclose(pf.drift_integral, 0.3 * path.time_grid.t, rtol=1e-13)
        np.testing.assert_allclose(pf.noise_integral, 1.5 * path.values, rtol=1e-13)

    def test_time_dependent_drift(self):
        path = sample_brownian_path(TimeGrid(1.0, 2000), 6)
        pf = path_functionals(lambda t, d: t, lambda t, d: 0.0, path)
        assert pf.drift_integral[-1] == pytest.approx(0.5, abs=1e-9)


class TestReconstructState:
    def test_gaussian_mean(self):
        g = SpaceGrid(-8.0, 10.0, 900)
        vals = GaussianLaw(1.0, 0.25).density(g.x)
        assert reconstruct_state(vals, g) == pytest.approx(1.0, abs=1e-8)

    def test_translated_mean(self):
        g = SpaceGrid(-10.0, 10.0, 1000)
        vals = shift_delta(GaussianLaw(0.3, 0.25), 0.2, 0.1, g.x)
        assert reconstruct_state(vals, g) == pytest.approx(0.6, abs=1e-8)

    def test_mass_deficit_warns(self):
        g = SpaceGrid(-8.0, 8.0, 800)
        vals = GaussianLaw(0.0, 1.0).density(g.x) * 0.9
        with pytest.warns(MassDeficitWarning):
            reconstruct_state(vals, g)
