import numpy as np
import pytest

from donskerlab import (
    BrownianPath,
    ConstantCoefficients,
    DegenerateRunError,
    DiracLaw,
    GaussianLaw,
    GeneralCoefficients,
    InputError,
    LogNormalLaw,
    MeanFieldGBM,
    SpaceGrid,
    StateFreeCoefficients,
    TimeGrid,
    conditional_expectation,
    empirical_density,
    sample_brownian_path,
    shift_delta,
    simulate_particles,
    substream_seed,
)


class TestSimulateParticles:
    def test_deterministic_transport(self):
        # zero diffusion, unit drift: every particle ends at 1
        tg = TimeGrid(1.0, 100)
        path = BrownianPath(tg, np.zeros(100))
        traj = simulate_particles(ConstantCoefficients(1.0, 0.0), DiracLaw(0.0), path, 10, 0)
        np.testing.assert_allclose(traj.final.positions, 1.0, atol=1e-12)

    def test_common_noise_rigidity(self):
        tg = TimeGrid(1.0, 500)
        path = sample_brownian_path(tg, 3)
        model = StateFreeCoefficients(lambda t, d: 0.4, lambda t, d: 1.3)
        traj = simulate_particles(model, GaussianLaw(0.0, 1.0), path, 200, 7)
        d0 = np.diff(traj.snapshots[0].positions)
        dT = np.diff(traj.final.positions)
        assert np.max(np.abs(dT - d0)) < 1e-12

    def test_state_free_shift_structure(self):
        # X_i(t) = Z_i + A(t) + M(t): the ensemble mean moves by A + M exactly
        tg = TimeGrid(1.0, 300)
        path = sample_brownian_path(tg, 4)
        traj = simulate_particles(ConstantCoefficients(0.2, 1.0), GaussianLaw(0.0, 0.25),
                                  path, 500, 8)
        shift = 0.2 * 1.0 + path.values[-1]
        got = traj.final.positions - traj.snapshots[0].positions
        np.testing.assert_allclose(got, shift, atol=1e-12)

    def test_empirical_density_matches_translate_oracle(self):
        law = GaussianLaw(0.0, 0.25)
        grid = SpaceGrid(-8.0, 8.0, 800)
        tg = TimeGrid(1.0, 500)
        path = sample_brownian_path(tg, substream_seed(0, 1))
        model = StateFreeCoefficients(lambda t, d: 0.0, lambda t, d: 1.0)
        traj = simulate_particles(model, law, path, 100_000, substream_seed(0, 2),
                                  store_stride=500)
        kde = empirical_density(traj.final, grid)
        oracle = shift_delta(law, 0.0, path.values[-1], grid.x)
        l1 = np.trapezoid(np.abs(kde.values - oracle), dx=grid.dx)
        assert l1 <= 5e-2

    def test_gbm_positivity(self):
        tg = TimeGrid(1.0, 400)
        path = sample_brownian_path(tg, 5)
        model = MeanFieldGBM(lambda t, d: 0.05, lambda t, d: 0.4)
        traj = simulate_particles(model, LogNormalLaw(0.0, 0.3), path, 1000, 6)
        for snap in traj.snapshots:
            assert np.all(snap.positions > 0)

    def test_gbm_log_scheme_is_exact(self):
        tg = TimeGrid(1.0, 250)
        path = sample_brownian_path(tg, 15)
        a, b = 0.05, 0.2
        model = MeanFieldGBM(lambda t, d: a, lambda t, d: b)
        law = LogNormalLaw(0.0, 0.3)
        traj = simulate_particles(model, law, path, 50, 16)
        z = law.sample(50, np.random.default_rng(16))
        want = z * np.exp((a - 0.5 * b * b) * 1.0 + b * path.values[-1])
        np.testing.assert_allclose(traj.final.positions, want, rtol=1e-10)

    def test_general_domain_violation_reports_step(self):
        tg = TimeGrid(1.0, 50)
        path = BrownianPath(tg, np.zeros(50))
        model = GeneralCoefficients(
            b=lambda t, x, d: np.ones_like(x),
            sigma=lambda t, x, d: np.zeros_like(x),
            domain=(-1.0, 0.5),
        )
        with pytest.raises(DegenerateRunError) as exc:
            simulate_particles(model, DiracLaw(0.0), path, 5, 0)
        assert 0 < exc.value.step_index < 50

    def test_requires_two_particles(self):
        path = BrownianPath(TimeGrid(1.0, 2), np.zeros(2))
        with pytest.raises(InputError):
            simulate_particles(ConstantCoefficients(0.0, 1.0), DiracLaw(0.0), path, 1, 0)

    def test_snapshot_count(self):
        path = BrownianPath(TimeGrid(1.0, 16), np.zeros(16))
        traj = simulate_particles(ConstantCoefficients(0.0, 0.0), DiracLaw(0.0), path, 4, 0)
        assert len(traj) == 17


class TestEmpiricalDensity:
    def test_point_ensemble_histogram(self):
        grid = SpaceGrid(-1.0, 1.0, 20)
        from donskerlab import ParticleEnsemble

        ens = ParticleEnsemble(np.zeros(100), 0, 0.0)
        slice_ = empirical_density(ens, grid, bandwidth=0.0)
        peak = np.argmax(slice_.values)
        assert grid.x[peak] == pytest.approx(0.0)
        assert slice_.values[peak] == pytest.approx(1.0 / grid.dx)
        assert np.count_nonzero(slice_.values) == 1

    def test_normalization_contract(self):
        from donskerlab import ParticleEnsemble

        grid = SpaceGrid(-10.0, 10.0, 500)
        rng = np.random.default_rng(3)
        ens = ParticleEnsemble(rng.normal(size=20_000), 0, 0.0)
        for bw in (0.0, 0.2, None):
            slice_ = empirical_density(ens, grid, bw)
            assert slice_.mass() == pytest.approx(1.0, abs=1e-6)

    def test_kde_consistency_vs_normal_density(self):
        from donskerlab import ParticleEnsemble

        grid = SpaceGrid(-8.0, 8.0, 800)
        rng = np.random.default_rng(11)
        ens = ParticleEnsemble(rng.standard_normal(100_000), 0, 0.0)
        slice_ = empirical_density(ens, grid)
        ref = GaussianLaw(0.0, 1.0).density(grid.x)
        assert np.trapezoid(np.abs(slice_.values - ref), dx=grid.dx) <= 2e-2

    def test_out_of_grid_mass_warns(self):
        from donskerlab import ParticleEnsemble

        grid = SpaceGrid(-1.0, 1.0, 50)
        ens = ParticleEnsemble(np.array([0.0, 0.5, 5.0, -4.0]), 0, 0.0)
        with pytest.warns(UserWarning, match="outside the grid"):
            empirical_density(ens, grid, bandwidth=0.0)


class TestConditionalExpectation:
    def test_probability_mass(self):
        from donskerlab import ParticleEnsemble

        ens = ParticleEnsemble(np.random.default_rng(0).normal(size=100), 0, 0.0)
        assert conditional_expectation(ens, lambda x: np.ones_like(x)) == 1.0

    def test_identity_on_shifted_ensemble(self):
        tg = TimeGrid(1.0, 100)
        path = sample_brownian_path(tg, 2)
        traj = simulate_particles(ConstantCoefficients(0.3, 1.0), GaussianLaw(0.0, 1.0),
                                  path, 1000, 5)
        z_mean = traj.snapshots[0].mean()
        want = z_mean + 0.3 + path.values[-1]
        got = conditional_expectation(traj.final, lambda x: x)
        assert got == pytest.approx(want, abs=1e-12)

    def test_median_indicator(self):
        from donskerlab import ParticleEnsemble

        ens = ParticleEnsemble(np.random.default_rng(1).standard_normal(100_000), 0, 0.0)
        got = conditional_expectation(ens, lambda x: (x >= 0).astype(float))
        assert got == pytest.approx(0.5, abs=5e-3)

    def test_rejects_nonfinite(self):
        from donskerlab import ParticleEnsemble

        ens = ParticleEnsemble(np.array([0.0, 1.0]), 0, 0.0)
        with pytest.raises(InputError), np.errstate(divide="ignore"):
            conditional_expectation(ens, lambda x: 1.0 / x)
