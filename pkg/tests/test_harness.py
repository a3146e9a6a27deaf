import json

import numpy as np
import pytest

from donskerlab import ConfigError, GaussianLaw, SpaceGrid, TimeGrid
from donskerlab.cli import main as cli_main
from donskerlab.fpsolver import DensityField
from donskerlab.harness import (
    ExperimentConfig,
    closed_form_field,
    compare_fields,
    run_experiment,
    worker_count,
)


def _base_config(**overrides):
    doc = {
        "master_seed": 77,
        "model": {"variant": "constant", "alpha": 0.2, "beta": 1.0},
        "initial_law": {"variant": "gaussian", "mean": 0.0, "variance": 0.25},
        "space_grid": {"x_min": -8.0, "x_max": 8.0, "n_cells": 200},
        "time_grid": {"horizon": 0.5, "n_steps": 100},
        "n_paths": 2,
        "solvers": {"fp": True, "closedform": True},
        "store_stride": 25,
    }
    doc.update(overrides)
    return doc


def _field_from(values, grid, tg):
    vals = np.asarray(values, dtype=float)
    return DensityField(tg, grid, vals, np.arange(vals.shape[0], dtype=np.int64),
                        np.trapezoid(vals, dx=grid.dx, axis=1), vals.min(axis=1), 0.0)


class TestConfig:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(_base_config()))
        cfg = ExperimentConfig.from_json(p)
        assert cfg.master_seed == 77
        assert cfg.solvers == ("fp", "closedform")
        assert cfg.space_grid().n_cells == 200

    def test_missing_field_named(self):
        doc = _base_config()
        del doc["master_seed"]
        with pytest.raises(ConfigError, match="master_seed"):
            ExperimentConfig.from_dict(doc)

    def test_zero_cells_named(self):
        doc = _base_config()
        doc["space_grid"]["n_cells"] = 0
        with pytest.raises(ConfigError, match="n_cells"):
            ExperimentConfig.from_dict(doc)

    def test_bad_variant_named(self):
        doc = _base_config(model={"variant": "pineapple", "alpha": 1.0, "beta": 1.0})
        with pytest.raises(ConfigError, match="variant"):
            ExperimentConfig.from_dict(doc)

    def test_bad_noise_mode(self):
        doc = _base_config(fp={"noise_mode": "skorokhod"})
        with pytest.raises(ConfigError, match="noise_mode"):
            ExperimentConfig.from_dict(doc)

    def test_unknown_solver_rejected(self):
        doc = _base_config(solvers={"quantum": True})
        with pytest.raises(ConfigError, match="quantum"):
            ExperimentConfig.from_dict(doc)


class TestCompareFields:
    def test_identical_fields_are_zero(self):
        g = SpaceGrid(-1.0, 1.0, 40)
        tg = TimeGrid(1.0, 2)
        vals = np.tile(GaussianLaw(0.0, 0.1).density(g.x), (3, 1))
        a = _field_from(vals, g, tg)
        rep = compare_fields(a, a)
        for metric in ("l1", "l2", "sup", "moment_diff"):
            assert rep.max_over_t(metric) == 0.0

    def test_shifted_indicator_hand_count(self):
        # single-node spike of height 1/dx moved one cell: |a-b| has two unit
        # spikes, trapezoid L1 = 2
        g = SpaceGrid(0.0, 1.0, 10)
        tg = TimeGrid(1.0, 1)
        a = np.zeros((2, g.n_points))
        b = np.zeros((2, g.n_points))
        a[:, 4] = 1.0 / g.dx
        b[:, 5] = 1.0 / g.dx
        rep = compare_fields(_field_from(a, g, tg), _field_from(b, g, tg))
        assert rep.at_final("l1") == pytest.approx(2.0, abs=1e-12)

    def test_l1_bounded_by_width_times_sup(self):
        g = SpaceGrid(-2.0, 2.0, 100)
        tg = TimeGrid(1.0, 1)
        rng = np.random.default_rng(0)
        a = rng.random((2, g.n_points))
        b = rng.random((2, g.n_points))
        rep = compare_fields(_field_from(a, g, tg), _field_from(b, g, tg))
        assert rep.at_final("l1") <= (g.x_max - g.x_min) * rep.at_final("sup") + 1e-12

    def test_triangle_inequality_on_sampled_triples(self):
        g = SpaceGrid(-2.0, 2.0, 60)
        tg = TimeGrid(1.0, 1)
        rng = np.random.default_rng(5)
        for _ in range(5):
            a, b, c = (
                _field_from(rng.random((2, g.n_points)), g, tg) for _ in range(3))
            for metric in ("l1", "l2", "sup"):
                ab = compare_fields(a, b).at_final(metric)
                bc = compare_fields(b, c).at_final(metric)
                ac = compare_fields(a, c).at_final(metric)
                assert ac <= ab + bc + 1e-12

    def test_grid_mismatch_rejected(self):
        g1 = SpaceGrid(-1.0, 1.0, 40)
        g2 = SpaceGrid(-1.0, 1.0, 50)
        tg = TimeGrid(1.0, 1)
        a = _field_from(np.zeros((2, g1.n_points)), g1, tg)
        b = _field_from(np.zeros((2, g2.n_points)), g2, tg)
        from donskerlab import InputError

        with pytest.raises(InputError):
            compare_fields(a, b)


class TestRunExperiment:
    def test_fp_vs_closedform_run(self, tmp_path):
        cfg = ExperimentConfig.from_dict(_base_config())
        result = run_experiment(cfg, out_dir=tmp_path)
        assert result.exit_code == 0
        assert (tmp_path / "fp_path0.csv").exists()
        assert (tmp_path / "compare_fp_closedform_path1.csv").exists()
        header = (tmp_path / "fp_path0.csv").read_text().splitlines()[0]
        assert header == "t,x,m"
        mass_header = (tmp_path / "fp_mass_path0.csv").read_text().splitlines()[0]
        assert mass_header == "t,mass,min_value"

    def test_tolerance_failure_names_metric(self, tmp_path):
        cfg = ExperimentConfig.from_dict(_base_config(tolerances={"l1": 1e-12}))
        result = run_experiment(cfg, out_dir=tmp_path)
        assert result.exit_code == 1
        assert any("tolerance failure: l1" in m for m in result.messages)

    def test_solver_failure_exit_code(self, tmp_path):
        # quadratic drift violating the advective CFL limit mid-run
        doc = _base_config(model={"variant": "burgers", "alpha": 500.0, "beta": 1.0},
                           initial_law={"variant": "gaussian", "mean": 0.0, "variance": 1.0},
                           solvers={"fp": True})
        cfg = ExperimentConfig.from_dict(doc)
        result = run_experiment(cfg, out_dir=tmp_path)
        assert result.exit_code == 3

    def test_volterra_outputs(self, tmp_path):
        doc = _base_config(solvers={"volterra": True}, n_paths=1)
        doc["initial_law"] = {"variant": "dirac", "x0": 0.0}
        doc["mollifier_eps"] = 0.4
        cfg = ExperimentConfig.from_dict(doc)
        result = run_experiment(cfg, out_dir=tmp_path)
        assert result.exit_code == 0
        conv = (tmp_path / "volterra_convergence_path0.csv").read_text().splitlines()
        assert conv[0] == "iteration,sup_diff"
        assert len(conv) > 2

    def test_localtime_outputs(self, tmp_path):
        doc = _base_config(solvers={"fp": True, "localtime": True}, n_paths=1,
                           store_stride=1)
        cfg = ExperimentConfig.from_dict(doc)
        result = run_experiment(cfg, out_dir=tmp_path)
        assert result.exit_code == 0
        lines = (tmp_path / "localtime_path0.csv").read_text().splitlines()
        assert lines[0] == "t,L,estimator,x,epsilon"
        assert any(",occupation," in ln for ln in lines[1:])
        assert any(",density_integral," in ln for ln in lines[1:])

    def test_plots_emitted_when_enabled(self, tmp_path):
        cfg = ExperimentConfig.from_dict(_base_config(plots=True, n_paths=1))
        result = run_experiment(cfg, out_dir=tmp_path)
        assert result.exit_code == 0
        assert (tmp_path / "overlay_fp_closedform_path0.svg").exists()


class TestClosedFormField:
    def test_gbm_requires_lognormal(self):
        doc = _base_config(model={"variant": "gbm", "alpha": 0.05, "beta": 0.2})
        cfg = ExperimentConfig.from_dict(doc)
        from donskerlab import sample_brownian_path

        path = sample_brownian_path(cfg.time_grid(), 1)
        with pytest.raises(ConfigError, match="lognormal"):
            closed_form_field(cfg, path, cfg.space_grid(), np.array([0, 100]))


class TestCli:
    def test_missing_config_is_usage_error(self, capsys):
        assert cli_main(["fokker-planck"]) == 2

    def test_bad_config_exit_2(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        doc = _base_config()
        doc["space_grid"]["n_cells"] = 0
        p.write_text(json.dumps(doc))
        code = cli_main(["--config", str(p), "--out", str(tmp_path / "o"), "fokker-planck"])
        assert code == 2
        assert "n_cells" in capsys.readouterr().err

    def test_compare_subcommand(self, tmp_path, capsys):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(_base_config(n_paths=1)))
        code = cli_main(["--config", str(p), "--out", str(tmp_path / "o"), "compare"])
        assert code == 0
        out = capsys.readouterr().out
        assert "fp vs closedform" in out

    def test_seed_override_changes_output(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(_base_config(n_paths=1)))
        assert cli_main(["--config", str(p), "--out", str(tmp_path / "a"), "--quiet",
                         "fokker-planck"]) == 0
        assert cli_main(["--config", str(p), "--out", str(tmp_path / "b"), "--quiet",
                         "--seed", "123", "fokker-planck"]) == 0
        a = (tmp_path / "a" / "fp_path0.csv").read_text()
        b = (tmp_path / "b" / "fp_path0.csv").read_text()
        assert a != b

    def test_simulate_subcommand(self, tmp_path, capsys):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(_base_config(n_paths=1, n_particles=500)))
        code = cli_main(["--config", str(p), "--out", str(tmp_path / "o"), "simulate"])
        assert code == 0
        assert (tmp_path / "o" / "particle_density_path0.csv").exists()


class TestWorkerCount:
    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv("DONSKER_THREADS", "2")
        assert worker_count(8) == 2
        monkeypatch.setenv("DONSKER_THREADS", "0")
        assert worker_count(8) >= 1
        monkeypatch.setenv("DONSKER_THREADS", "-1")
        with pytest.raises(ConfigError):
            worker_count(8)
