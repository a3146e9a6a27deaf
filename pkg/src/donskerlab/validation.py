"""Acceptance suite: every validation criterion with its pinned tolerance.

Each criterion function is pure given the master seed and returns a
CriterionResult with one printable line per check.  ``run_validation`` runs
them all, aggregates the mass-conservation ledger, and performs the
thread-count determinism check.

Two checks are asserted exactly as specified although analysis and
measurement show the stated tolerance cannot be met by the defined
estimator/scheme; they are expected to FAIL honestly and their result lines
carry the measured diagnosis:

* band-occupation mean at eps = 0.05: the estimator's exact expectation is
  sqrt(2/pi) - eps/2 + O(eps^2) (band smoothing of the singular density)
  plus a chord-sampling deficit at dt = 1e-4, about -5% in total versus the
  +-2% gate;
* the kernel-equation solve at mollifier width 0.1: the left-point scheme's
  pathwise error scales like sqrt(dt)/(beta sigma_moll), far above the gate
  at any desk-scale resolution, and Jacobi sweeps need > 20 iterations.
"""

from __future__ import annotations

import filecmp
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .closedform import (
    BurgersParams,
    brownian_delta_conditional,
    brownian_delta_expectation,
    burgers_delta,
    gbm_delta,
    reconstruct_state,
    shift_delta,
)
from .errors import NonConvergenceError
from .fpsolver import DensityField, mass, solve_fp, tabulate_density
from .harness import ExperimentConfig, parallel_map, run_experiment
from .localtime import (
    band_occupation_fractions,
    density_local_time,
    expected_band_local_time_bm,
    occupation_local_time,
)
from .model import (
    BurgersDrift,
    ConstantCoefficients,
    DiracLaw,
    GaussianLaw,
    LogNormalLaw,
    MeanFieldGBM,
    SpaceGrid,
    TimeGrid,
    sample_brownian_path,
    sample_initial,
    substream_rng,
    substream_seed,
)
from .particle import empirical_density, simulate_particles
from .volterra import VolterraKernel, solve_volterra

__all__ = ["CriterionResult", "run_validation", "DEFAULT_MASTER_SEED", "CRITERIA"]

DEFAULT_MASTER_SEED = 1234
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass
class CriterionResult:
    name: str
    passed: bool
    lines: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def check(self, ok: bool, line: str) -> None:
        self.passed = self.passed and bool(ok)
        self.lines.append(("PASS " if ok else "FAIL ") + line)

    def note(self, line: str) -> None:
        self.lines.append("note " + line)


def _l1(a, b, dx):
    return float(np.trapezoid(np.abs(a - b), dx=dx))


def _variance(values, grid):
    mean = float(np.trapezoid(grid.x * values, dx=grid.dx))
    second = float(np.trapezoid(grid.x ** 2 * values, dx=grid.dx))
    return second - mean * mean


# ---------------------------------------------------------------------------
# criteria 1 and 2: translate oracle and conditional-variance rigidity
# ---------------------------------------------------------------------------

def criterion_shift_oracle(seed: int = DEFAULT_MASTER_SEED):
    """State-free model vs the translate closed form on ten paths, plus the
    resolution-halving convergence check and variance rigidity."""
    c1 = CriterionResult("1 shift-oracle equivalence", True)
    c2 = CriterionResult("2 conditional-variance rigidity", True)
    alpha, beta = 0.2, 1.0
    law = GaussianLaw(0.0, 0.25)
    grid = SpaceGrid(-8.0, 8.0, 800)
    tg = TimeGrid(1.0, 1000)
    model = ConstantCoefficients(alpha, beta)
    init = tabulate_density(law, grid)
    drifts = []

    def one_path(k):
        path = sample_brownian_path(tg, substream_seed(seed, 1, k))
        fld = solve_fp(model, init, path, grid, store_stride=100)
        sups, l1s = [], []
        for r, j in enumerate(fld.stored_steps):
            oracle = shift_delta(law, alpha * tg.t[j], beta * path.values[j], grid.x)
            diff = fld.values[r] - oracle
            sups.append(float(np.max(np.abs(diff))))
            l1s.append(_l1(fld.values[r], oracle, grid.dx))
        var_err = abs(_variance(fld.values[-1], grid) - 0.25)
        return max(sups), max(l1s), var_err, fld.mass_drift()

    results = parallel_map(one_path, list(range(10)))
    sup_worst = max(r[0] for r in results)
    l1_worst = max(r[1] for r in results)
    var_worst = max(r[2] for r in results)
    drifts.extend(r[3] for r in results)

    c1.check(sup_worst <= 2e-2, f"sup error over 10 paths = {sup_worst:.3e} (gate 2e-2)")
    c1.check(l1_worst <= 1e-2, f"L1 error over 10 paths = {l1_worst:.3e} (gate 1e-2)")

    fine_path = sample_brownian_path(TimeGrid(1.0, 2000), substream_seed(seed, 1, 100))
    coarse_path = fine_path.coarsen(2)
    grid_fine = SpaceGrid(-8.0, 8.0, 1600)
    f_coarse = solve_fp(model, init, coarse_path, grid, store_stride=2000)
    f_fine = solve_fp(model, tabulate_density(law, grid_fine), fine_path, grid_fine, store_stride=2000)
    sup_c = float(np.max(np.abs(
        f_coarse.values[-1] - shift_delta(law, alpha, beta * coarse_path.values[-1], grid.x))))
    sup_f = float(np.max(np.abs(
        f_fine.values[-1] - shift_delta(law, alpha, beta * fine_path.values[-1], grid_fine.x))))
    ratio = sup_c / sup_f
    drifts += [f_coarse.mass_drift(), f_fine.mass_drift()]
    c1.check(ratio >= 2.0, f"halving (dx, dt) reduces sup error by {ratio:.2f}x (gate >= 2)")

    c2.check(var_worst <= 2e-3,
             f"second central moment at T within {var_worst:.3e} of 0.25 (gate 2e-3)")
    c1.details["mass_drifts"] = drifts
    return c1, c2


# ---------------------------------------------------------------------------
# criterion 3: particle oracle
# ---------------------------------------------------------------------------

def criterion_particle_oracle(seed: int = DEFAULT_MASTER_SEED):
    res = CriterionResult("3 particle oracle", True)
    alpha, beta = 0.2, 1.0
    law = GaussianLaw(0.0, 0.25)
    grid = SpaceGrid(-8.0, 8.0, 800)
    tg = TimeGrid(1.0, 1000)
    model = ConstantCoefficients(alpha, beta)
    path = sample_brownian_path(tg, substream_seed(seed, 3, 0))
    traj = simulate_particles(model, law, path, 100_000, substream_seed(seed, 3, 1),
                              store_stride=500)
    kde = empirical_density(traj.final, grid)
    oracle = shift_delta(law, alpha, beta * path.values[-1], grid.x)
    l1 = _l1(kde.values, oracle, grid.dx)
    res.check(l1 <= 5e-2, f"KDE vs translate oracle L1 = {l1:.3e} (gate 5e-2)")

    first = traj.snapshots[0].positions
    last = traj.final.positions
    rigidity = float(np.max(np.abs((last[1:] - last[:-1]) - (first[1:] - first[:-1]))))
    res.check(rigidity <= 1e-12,
              f"pairwise-difference rigidity deviation = {rigidity:.2e} (float round-off gate 1e-12)")

    rec = reconstruct_state(kde.values, grid)
    diff = abs(rec - traj.final.mean())
    res.check(diff <= 2e-2, f"reconstructed state vs ensemble mean diff = {diff:.3e} (gate 2e-2)")
    return res


# ---------------------------------------------------------------------------
# criterion 4: geometric family
# ---------------------------------------------------------------------------

def criterion_gbm(seed: int = DEFAULT_MASTER_SEED):
    res = CriterionResult("4 geometric model", True)
    alpha, beta = 0.05, 0.2
    law = LogNormalLaw(0.0, 0.3)
    H = law.log_law()
    model = MeanFieldGBM(lambda t, d: alpha, lambda t, d: beta)
    grid = SpaceGrid(0.02, 10.0, 1000)
    tg = TimeGrid(1.0, 1000)
    path = sample_brownian_path(tg, substream_seed(seed, 4, 0))
    # log-drift carries the Ito exponent correction alpha - beta^2/2; the
    # exact log-space particle scheme below certifies this center
    a_log = alpha - 0.5 * beta * beta
    g_at_T = gbm_delta(H, a_log * tg.horizon, beta * path.values[-1], grid.x)

    traj = simulate_particles(model, law, path, 100_000, substream_seed(seed, 4, 1),
                              store_stride=500)
    kde = empirical_density(traj.final, grid)
    l1_kde = _l1(kde.values, g_at_T, grid.dx)
    res.check(l1_kde <= 5e-2, f"closed form vs particle KDE L1 = {l1_kde:.3e} (gate 5e-2)")

    fld = solve_fp(model, tabulate_density(law, grid), path, grid, store_stride=1000)
    sel = (grid.x >= 0.3) & (grid.x <= 3.0)
    l1_fp = float(np.trapezoid(np.abs(fld.values[-1] - g_at_T)[sel], dx=grid.dx))
    res.check(l1_fp <= 3e-2, f"grid solve vs closed form L1 on [0.3, 3] = {l1_fp:.3e} (gate 3e-2)")
    res.note("log-drift uses alpha - beta^2/2 (exact exponent); the bare-alpha "
             f"center misses the particle oracle by L1 = "
             f"{_l1(kde.values, gbm_delta(H, alpha * tg.horizon, beta * path.values[-1], grid.x), grid.dx):.3e}")
    res.details["mass_drifts"] = [fld.mass_drift()]
    return res


# ---------------------------------------------------------------------------
# criterion 5: quadratic self-advection (Cole-Hopf)
# ---------------------------------------------------------------------------

def criterion_burgers(seed: int = DEFAULT_MASTER_SEED):
    res = CriterionResult("5 quadratic drift via Cole-Hopf", True)
    params = BurgersParams(1.0, 1.0)
    law = GaussianLaw(0.0, 1.0)
    model = BurgersDrift(1.0, 1.0)
    grid = SpaceGrid(-10.0, 10.0, 1000)
    tg = TimeGrid(0.5, 1000)
    init = tabulate_density(law, grid)

    h0 = burgers_delta(law, params, 0.0, 0.0, grid.x)
    t0_err = float(np.max(np.abs(h0 - law.density(grid.x))))
    res.check(t0_err <= 1e-10, f"closed form at t=0 reproduces h within {t0_err:.2e} (gate 1e-10)")

    drifts = []
    worst_mass = 0.0
    worst_l1 = 0.0
    ito_gap = None
    for k in range(5):
        path = sample_brownian_path(tg, substream_seed(seed, 5, k))
        ch = burgers_delta(law, params, tg.horizon, path.values[-1], grid.x)
        worst_mass = max(worst_mass, abs(mass(ch, grid) - 1.0))
        # the Cole-Hopf field solves the reading in which the noise term acts
        # classically; the matching grid solve keeps the full diffusion
        fld = solve_fp(model, init, path, grid, noise_mode="stratonovich", store_stride=1000)
        drifts.append(fld.mass_drift())
        worst_l1 = max(worst_l1, _l1(fld.values[-1], ch, grid.dx))
        if k == 0:
            f_ito = solve_fp(model, init, path, grid, noise_mode="ito", store_stride=1000)
            drifts.append(f_ito.mass_drift())
            ito_gap = _l1(f_ito.values[-1], ch, grid.dx)

    res.check(worst_mass <= 1e-6, f"closed-form mass deviation = {worst_mass:.2e} (gate 1e-6)")
    res.check(worst_l1 <= 3e-2,
              f"grid solve (classical noise reading) vs closed form L1 = {worst_l1:.3e} (gate 3e-2)")
    res.note(f"the Ito-reading solve differs from the closed form by L1 = {ito_gap:.3e}; "
             "particle simulations side with the Ito reading (see the module docstrings)")
    res.details["mass_drifts"] = drifts
    return res


# ---------------------------------------------------------------------------
# criterion 6: kernel equation (Picard) and the drift-sign study
# ---------------------------------------------------------------------------

def criterion_volterra(seed: int = DEFAULT_MASTER_SEED):
    res = CriterionResult("6 kernel equation", True)
    kern = VolterraKernel(0.0, 1.0)
    sigma_moll = 0.1
    grid = SpaceGrid(-6.0, 6.0, 600)
    tg = TimeGrid(0.5, 512)
    path = sample_brownian_path(tg, substream_seed(seed, 6, 0))
    h_m = GaussianLaw(0.0, sigma_moll ** 2)

    try:
        sol = solve_volterra(kern, DiracLaw(0.0), path, grid,
                             mollifier_eps=sigma_moll, max_iter=120, tol=1e-8)
        iters = sol.iterations
        ratios = sol.decay_ratios()
        tail_geometric = bool(np.all(ratios[1:] < 1.0)) if ratios.size > 1 else False
        oracle = shift_delta(h_m, 0.0, path.values[-1], grid.x)
        l1 = _l1(sol.field.values[-1], oracle, grid.dx)
    except NonConvergenceError as e:
        iters = len(e.residual_history)
        ratios = np.asarray(e.residual_history[1:]) / np.asarray(e.residual_history[:-1])
        tail_geometric = False
        l1 = float("inf")

    res.check(iters <= 20, f"Picard sweeps to 1e-8 = {iters} (gate 20)")
    res.check(tail_geometric,
              f"residual decay geometric after first sweep "
              f"(max later ratio {float(np.max(ratios[1:])) if ratios.size > 1 else float('nan'):.3f})")
    res.check(l1 <= 3e-2, f"solution vs translate oracle L1 = {l1:.3e} (gate 3e-2)")
    res.note("left-point scheme error scales like sqrt(dt)/(beta sigma_moll); "
             "at this gate the required dt is far below desk scale")

    # drift-sign study: which kernel center reproduces the unconditional
    # drifted density under path averaging
    alpha = 0.5
    tg6 = TimeGrid(0.5, 64)
    g6 = SpaceGrid(-5.0, 5.0, 200)
    n_paths = 200
    sums = {+1: np.zeros(g6.n_points), -1: np.zeros(g6.n_points)}
    sq = {+1: np.zeros(g6.n_points), -1: np.zeros(g6.n_points)}

    def study(k):
        p = sample_brownian_path(tg6, substream_seed(seed, 66, k))
        out = {}
        for s in (+1, -1):
            sol = solve_volterra(VolterraKernel(alpha, 1.0, drift_sign=s), DiracLaw(0.0),
                                 p, g6, dirac_literal=True, method="march")
            out[s] = sol.field.values[-1]
        return out

    for out in parallel_map(study, list(range(n_paths))):
        for s in (+1, -1):
            sums[s] += out[s]
            sq[s] += out[s] ** 2

    t_end = tg6.horizon
    p_density = brownian_delta_expectation(t_end, g6.x, +alpha * t_end)  # N(x; x0 + alpha t, t)
    k_density = brownian_delta_expectation(t_end, g6.x, -alpha * t_end)  # N(x; x0 - alpha t, t)
    verdict = {}
    for s in (+1, -1):
        mean_field = sums[s] / n_paths
        node_se = np.sqrt(np.maximum(sq[s] / n_paths - mean_field ** 2, 0.0) / n_paths)
        mc_l1 = float(np.trapezoid(node_se, dx=g6.dx)) * SQRT_2_OVER_PI
        l1_p = _l1(mean_field, p_density, g6.dx)
        l1_k = _l1(mean_field, k_density, g6.dx)
        verdict[s] = (l1_p, l1_k, mc_l1)
        res.note(f"drift_sign={s:+d}: path-averaged field L1 vs drifted density "
                 f"= {l1_p:.3f}, vs printed-kernel center = {l1_k:.3f} (MC error ~ {mc_l1:.3f})")
    matches_p = [s for s in (+1, -1) if verdict[s][0] <= 3.0 * verdict[s][2]]
    res.check(len(matches_p) == 1,
              f"exactly one drift_sign matches the drifted density within MC error: "
              f"{matches_p if matches_p else 'none'}")
    if len(matches_p) == 1:
        res.details["drift_sign_matching_p"] = matches_p[0]
    return res


# ---------------------------------------------------------------------------
# criterion 7: local time
# ---------------------------------------------------------------------------

def criterion_local_time(seed: int = DEFAULT_MASTER_SEED):
    res = CriterionResult("7 local time", True)
    # (a) band-occupation mean over 1e4 paths at eps = 0.05, dt = 1e-4
    eps, n_steps, n_paths, chunk = 0.05, 10_000, 10_000, 500
    dt = 1.0 / n_steps

    def occupy(c):
        rng = substream_rng(seed, 7, c)
        inc = rng.normal(0.0, math.sqrt(dt), size=(chunk, n_steps))
        paths = np.concatenate([np.zeros((chunk, 1)), np.cumsum(inc, axis=1)], axis=1)
        frac = band_occupation_fractions(paths, 0.0, eps)
        return float((frac.sum(axis=1) * dt).sum() / (2.0 * eps))

    totals = parallel_map(occupy, list(range(n_paths // chunk)))
    mean_occ = sum(totals) / n_paths
    gate = 0.02 * SQRT_2_OVER_PI
    res.check(abs(mean_occ - SQRT_2_OVER_PI) <= gate,
              f"mean band occupation = {mean_occ:.4f} vs sqrt(2/pi) = {SQRT_2_OVER_PI:.4f} (gate +-2%)")
    res.note(f"exact expectation of the eps-band estimator is "
             f"{expected_band_local_time_bm(1.0, eps):.4f} (continuum), i.e. eps/2 below the "
             "limit; chord sampling at this dt lowers it further")

    # (b) density-integral estimator on the tabulated heat-kernel field
    n_t = 10_000
    tg = TimeGrid(1.0, n_t)
    g = SpaceGrid(-1.0, 1.0, 200)
    vals = np.empty((n_t + 1, g.n_points))
    for j in range(1, n_t + 1):
        vals[j] = brownian_delta_expectation(tg.t[j], g.x, 0.0)
    vals[0] = vals[1]
    fld = DensityField(tg, g, vals, np.arange(n_t + 1, dtype=np.int64),
                       np.trapezoid(vals, dx=g.dx, axis=1), vals.min(axis=1), 0.0)
    crv = density_local_time(fld, 0.0, origin="sqrt")
    err = abs(crv.final - SQRT_2_OVER_PI)
    res.check(err <= 1e-3, f"density-integral local time error = {err:.2e} (gate 1e-3)")

    # (c) dual-estimator agreement on one path with matched initialization
    band = 0.25
    sig = band / math.sqrt(3.0)  # variance-matched mollifier
    tgf = TimeGrid(1.0, 1000)
    gridf = SpaceGrid(-8.0, 8.0, 800)
    model = ConstantCoefficients(0.0, 1.0)
    path = sample_brownian_path(tgf, substream_seed(seed, 71, 0))
    z0 = float(sample_initial(GaussianLaw(0.0, sig * sig), 1, substream_seed(seed, 72, 0))[0])
    fldf = solve_fp(model, tabulate_density(GaussianLaw(z0, sig * sig), gridf), path, gridf)
    dens = density_local_time(fldf, 0.0)
    occ = occupation_local_time(z0 + path.values, tgf, 0.0, band)
    rel = abs(occ.final - dens.final) / dens.final
    res.check(rel <= 0.10,
              f"dual-estimator relative gap at t=1: {rel:.2%} "
              f"(occupation {occ.final:.4f} vs density integral {dens.final:.4f}, gate 10%)")
    res.details["mass_drifts"] = [fldf.mass_drift()]
    return res


# ---------------------------------------------------------------------------
# criterion 8: conditional kernel moments
# ---------------------------------------------------------------------------

def criterion_conditional_formula(seed: int = DEFAULT_MASTER_SEED):
    res = CriterionResult("8 conditional kernel moments", True)
    T, t_mid = 2.0, 1.0
    path = sample_brownian_path(TimeGrid(T, 200), substream_seed(seed, 8, 0))
    b_t = float(path.values[100])
    var = T - t_mid
    width = 14.0 * math.sqrt(var)
    g = SpaceGrid(b_t - width, b_t + width, 8000)
    vals = brownian_delta_conditional(T, t_mid, g.x, b_t)
    m0 = float(np.trapezoid(vals, dx=g.dx))
    m1 = float(np.trapezoid(g.x * vals, dx=g.dx))
    m2 = float(np.trapezoid(g.x ** 2 * vals, dx=g.dx))
    for got, want, label in ((m0, 1.0, "g=1"), (m1, b_t, "g=x"),
                             (m2, b_t * b_t + var, "g=x^2")):
        res.check(abs(got - want) <= 1e-8,
                  f"quadrature moment {label}: |{got:.12f} - {want:.12f}| <= 1e-8")
    return res


# ---------------------------------------------------------------------------
# criterion 9: conservation and determinism
# ---------------------------------------------------------------------------

def _determinism_config(seed):
    return ExperimentConfig.from_dict({
        "master_seed": seed,
        "model": {"variant": "constant", "alpha": 0.2, "beta": 1.0},
        "initial_law": {"variant": "gaussian", "mean": 0.0, "variance": 0.25},
        "space_grid": {"x_min": -8.0, "x_max": 8.0, "n_cells": 200},
        "time_grid": {"horizon": 0.5, "n_steps": 128},
        "n_paths": 3,
        "solvers": {"fp": True, "closedform": True, "volterra": True, "localtime": True},
        "store_stride": 32,
    })


def criterion_conservation_determinism(seed: int = DEFAULT_MASTER_SEED, collected_drifts=None):
    res = CriterionResult("9 conservation and determinism", True)
    drifts = list(collected_drifts or [])
    worst = max(drifts) if drifts else 0.0
    res.check(worst <= 1e-6,
              f"max mass drift over {len(drifts)} grid solves = {worst:.2e} (gate 1e-6)")

    cfg = _determinism_config(seed)
    outputs = {}
    keep = os.environ.get("DONSKER_THREADS")
    try:
        for threads in ("1", "3"):
            os.environ["DONSKER_THREADS"] = threads
            d = Path(tempfile.mkdtemp(prefix=f"donskerlab-det{threads}-"))
            result = run_experiment(cfg, out_dir=d)
            if result.exit_code != 0:
                res.check(False, f"determinism run exited {result.exit_code}")
                return res
            outputs[threads] = d
    finally:
        if keep is None:
            os.environ.pop("DONSKER_THREADS", None)
        else:
            os.environ["DONSKER_THREADS"] = keep

    a, b = outputs["1"], outputs["3"]
    names = sorted(p.name for p in a.iterdir())
    names_b = sorted(p.name for p in b.iterdir())
    identical = names == names_b and all(
        filecmp.cmp(a / n, b / n, shallow=False) for n in names)
    res.check(identical,
              f"{len(names)} output files byte-identical across DONSKER_THREADS=1 and 3")
    return res


# ---------------------------------------------------------------------------
# suite driver
# ---------------------------------------------------------------------------

CRITERIA = ["1", "2", "3", "4", "5", "6", "7", "8", "9"]


def run_validation(master_seed: int = DEFAULT_MASTER_SEED, out_dir: Optional[str] = None):
    """Run every acceptance criterion; returns the list of CriterionResult.

    Writes a validation_report.csv when ``out_dir`` is given.  Mass drifts
    recorded by the individual criteria feed the conservation check.
    """
    results = []
    drifts = []

    c1, c2 = criterion_shift_oracle(master_seed)
    drifts += c1.details.get("mass_drifts", [])
    results += [c1, c2]

    c3 = criterion_particle_oracle(master_seed)
    results.append(c3)

    c4 = criterion_gbm(master_seed)
    drifts += c4.details.get("mass_drifts", [])
    results.append(c4)

    c5 = criterion_burgers(master_seed)
    drifts += c5.details.get("mass_drifts", [])
    results.append(c5)

    c6 = criterion_volterra(master_seed)
    results.append(c6)

    c7 = criterion_local_time(master_seed)
    drifts += c7.details.get("mass_drifts", [])
    results.append(c7)

    c8 = criterion_conditional_formula(master_seed)
    results.append(c8)

    c9 = criterion_conservation_determinism(master_seed, collected_drifts=drifts)
    results.append(c9)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "validation_report.csv", "w") as fh:
            fh.write("criterion,status,detail\n")
            for r in results:
                for line in r.lines:
                    detail = line.split(" ", 1)[1].replace('"', "'")
                    status = line.split(" ", 1)[0]
                    fh.write(f"{r.name.split(' ')[0]},{status},\"{detail}\"\n")
    return results
