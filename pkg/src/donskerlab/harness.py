"""Experiment configuration, comparison metrics, file emission and the
orchestration that ties the solvers together into reproducible runs.

A run is fully determined by its JSON config (master seed included): path
seeds and initial-draw seeds are derived sub-streams, worker count never
affects results, and CSV emission uses a fixed float format so identical
configs produce byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .closedform import BurgersParams, burgers_delta, gbm_delta, shift_delta
from .errors import ConfigError, DonskerLabError, InputError
from .fpsolver import DensityField, mass, solve_fp, tabulate_density
from .localtime import density_local_time, occupation_local_time
from .model import (
    BrownianPath,
    BurgersDrift,
    CoefficientModel,
    ConstantCoefficients,
    DiracLaw,
    GaussianLaw,
    InitialLaw,
    LogNormalLaw,
    MeanFieldGBM,
    SpaceGrid,
    TimeGrid,
    sample_brownian_path,
    substream_seed,
)
from .particle import empirical_density, simulate_particles
from .volterra import VolterraKernel, solve_volterra

__all__ = [
    "ExperimentConfig",
    "ComparisonReport",
    "ExperimentResult",
    "compare_fields",
    "run_experiment",
    "closed_form_field",
    "worker_count",
    "write_field_csv",
    "write_curve_csv",
    "write_report_csv",
]

FLOAT_FMT = "%.17g"

# stream tags for seed derivation
STREAM_PATHS = 11
STREAM_INITIAL = 12
STREAM_LOCALTIME = 13


def worker_count(n_tasks: int) -> int:
    """Worker cap from DONSKER_THREADS (0 or unset = auto)."""
    raw = os.environ.get("DONSKER_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"DONSKER_THREADS must be an integer, got {raw!r}")
    if cap < 0:
        raise ConfigError(f"DONSKER_THREADS must be >= 0, got {cap}")
    if cap == 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))


def parallel_map(fn: Callable, items: list) -> list:
    """Order-preserving map across a thread pool; results are independent of
    the schedule because every task derives its own seed stream."""
    workers = worker_count(len(items))
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_MODEL_VARIANTS = ("constant", "gbm", "burgers")
_LAW_VARIANTS = ("dirac", "gaussian", "lognormal")
_SOLVER_NAMES = ("fp", "particle", "closedform", "volterra", "localtime")


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int
    model_variant: str
    model_params: dict
    law_variant: str
    law_params: dict
    x_min: float
    x_max: float
    n_cells: int
    horizon: float
    n_steps: int
    n_particles: int = 10_000
    n_paths: int = 1
    solvers: tuple = ("fp", "closedform")
    l1_tol: Optional[float] = None
    sup_tol: Optional[float] = None
    mollifier_eps: Optional[float] = None
    kde_bandwidth: Optional[float] = None
    volterra_drift_sign: int = +1
    noise_mode: str = "ito"
    noise_sign: float = 1.0
    localtime_epsilon: Optional[float] = None
    localtime_x: float = 0.0
    store_stride: int = 1
    plots: bool = False
    output_dir: Optional[str] = None

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config is not valid JSON: {e}")
        return ExperimentConfig.from_dict(doc)

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        def need(section, key, types, where):
            if key not in section:
                raise ConfigError(f"missing required field {where}.{key}" if where else f"missing required field {key}")
            v = section[key]
            if not isinstance(v, types):
                raise ConfigError(f"field {where + '.' if where else ''}{key} has wrong type {type(v).__name__}")
            return v

        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        seed = need(doc, "master_seed", int, "")

        model = need(doc, "model", dict, "")
        variant = need(model, "variant", str, "model")
        if variant not in _MODEL_VARIANTS:
            raise ConfigError(f"field model.variant must be one of {_MODEL_VARIANTS}, got {variant!r}")
        params = {k: v for k, v in model.items() if k != "variant"}
        for k in ("alpha", "beta"):
            if k not in params or not isinstance(params[k], (int, float)):
                raise ConfigError(f"field model.{k} must be a number")

        law = need(doc, "initial_law", dict, "")
        law_variant = need(law, "variant", str, "initial_law")
        if law_variant not in _LAW_VARIANTS:
            raise ConfigError(f"field initial_law.variant must be one of {_LAW_VARIANTS}, got {law_variant!r}")
        law_params = {k: v for k, v in law.items() if k != "variant"}

        sg = need(doc, "space_grid", dict, "")
        x_min = need(sg, "x_min", (int, float), "space_grid")
        x_max = need(sg, "x_max", (int, float), "space_grid")
        n_cells = need(sg, "n_cells", int, "space_grid")
        if n_cells < 1:
            raise ConfigError(f"field space_grid.n_cells must be >= 1, got {n_cells}")
        if not x_min < x_max:
            raise ConfigError("field space_grid.x_min must be < space_grid.x_max")

        tg = need(doc, "time_grid", dict, "")
        horizon = need(tg, "horizon", (int, float), "time_grid")
        n_steps = need(tg, "n_steps", int, "time_grid")
        if horizon <= 0:
            raise ConfigError(f"field time_grid.horizon must be > 0, got {horizon}")
        if n_steps < 1:
            raise ConfigError(f"field time_grid.n_steps must be >= 1, got {n_steps}")

        solvers = doc.get("solvers", {"fp": True, "closedform": True})
        if not isinstance(solvers, dict):
            raise ConfigError("field solvers must be an object of booleans")
        enabled = []
        for name, flag in solvers.items():
            if name not in _SOLVER_NAMES:
                raise ConfigError(f"field solvers.{name} is not a known solver {_SOLVER_NAMES}")
            if not isinstance(flag, bool):
                raise ConfigError(f"field solvers.{name} must be a boolean")
            if flag:
                enabled.append(name)

        tol = doc.get("tolerances", {})
        if not isinstance(tol, dict):
            raise ConfigError("field tolerances must be an object")
        l1_tol = tol.get("l1")
        sup_tol = tol.get("sup")
        for nm, v in (("l1", l1_tol), ("sup", sup_tol)):
            if v is not None and (not isinstance(v, (int, float)) or v <= 0):
                raise ConfigError(f"field tolerances.{nm} must be a positive number")

        n_particles = doc.get("n_particles", 10_000)
        if not isinstance(n_particles, int) or n_particles < 2:
            raise ConfigError(f"field n_particles must be an integer >= 2, got {n_particles}")
        n_paths = doc.get("n_paths", 1)
        if not isinstance(n_paths, int) or n_paths < 1:
            raise ConfigError(f"field n_paths must be an integer >= 1, got {n_paths}")

        fp = doc.get("fp", {})
        if not isinstance(fp, dict):
            raise ConfigError("field fp must be an object")
        noise_mode = fp.get("noise_mode", "ito")
        if noise_mode not in ("ito", "stratonovich"):
            raise ConfigError(f"field fp.noise_mode must be 'ito' or 'stratonovich', got {noise_mode!r}")
        noise_sign = fp.get("noise_sign", 1.0)
        if noise_sign not in (1.0, -1.0, 1, -1):
            raise ConfigError("field fp.noise_sign must be +1 or -1")

        drift_sign = doc.get("volterra_drift_sign", 1)
        if drift_sign not in (1, -1):
            raise ConfigError("field volterra_drift_sign must be +1 or -1")

        lt = doc.get("localtime", {})
        if not isinstance(lt, dict):
            raise ConfigError("field localtime must be an object")
        lt_eps = lt.get("epsilon")
        if lt_eps is not None and (not isinstance(lt_eps, (int, float)) or lt_eps <= 0):
            raise ConfigError("field localtime.epsilon must be a positive number")
        lt_x = lt.get("x", 0.0)
        if not isinstance(lt_x, (int, float)):
            raise ConfigError("field localtime.x must be a number")

        moll = doc.get("mollifier_eps")
        if moll is not None and (not isinstance(moll, (int, float)) or moll <= 0):
            raise ConfigError("field mollifier_eps must be a positive number")
        bw = doc.get("kde_bandwidth")
        if bw is not None and (not isinstance(bw, (int, float)) or bw < 0):
            raise ConfigError("field kde_bandwidth must be >= 0")
        stride = doc.get("store_stride", 1)
        if not isinstance(stride, int) or stride < 1:
            raise ConfigError(f"field store_stride must be an integer >= 1, got {stride}")
        plots = doc.get("plots", False)
        if not isinstance(plots, bool):
            raise ConfigError("field plots must be a boolean")
        out = doc.get("output_dir")
        if out is not None and not isinstance(out, str):
            raise ConfigError("field output_dir must be a string")

        return ExperimentConfig(
            master_seed=seed,
            model_variant=variant,
            model_params=params,
            law_variant=law_variant,
            law_params=law_params,
            x_min=float(x_min),
            x_max=float(x_max),
            n_cells=n_cells,
            horizon=float(horizon),
            n_steps=n_steps,
            n_particles=n_particles,
            n_paths=n_paths,
            solvers=tuple(enabled),
            l1_tol=l1_tol,
            sup_tol=sup_tol,
            mollifier_eps=moll,
            kde_bandwidth=bw,
            volterra_drift_sign=drift_sign,
            noise_mode=noise_mode,
            noise_sign=float(noise_sign),
            localtime_epsilon=lt_eps,
            localtime_x=float(lt_x),
            store_stride=stride,
            plots=plots,
            output_dir=out,
        )

    # -- builders ----------------------------------------------------------

    def space_grid(self) -> SpaceGrid:
        return SpaceGrid(self.x_min, self.x_max, self.n_cells)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.n_steps)

    def build_model(self) -> CoefficientModel:
        a = float(self.model_params["alpha"])
        b = float(self.model_params["beta"])
        if self.model_variant == "constant":
            return ConstantCoefficients(a, b)
        if self.model_variant == "gbm":
            return MeanFieldGBM(lambda t, d: a, lambda t, d: b)
        if self.model_variant == "burgers":
            return BurgersDrift(a, b)
        raise ConfigError(f"unsupported model variant {self.model_variant!r}")

    def build_law(self) -> InitialLaw:
        p = self.law_params
        try:
            if self.law_variant == "dirac":
                return DiracLaw(float(p["x0"]))
            if self.law_variant == "gaussian":
                return GaussianLaw(float(p["mean"]), float(p["variance"]))
            if self.law_variant == "lognormal":
                return LogNormalLaw(float(p["mu"]), float(p["sigma"]))
        except KeyError as e:
            raise ConfigError(f"missing required field initial_law.{e.args[0]}")
        except InputError as e:
            raise ConfigError(f"invalid initial_law: {e}")
        raise ConfigError(f"unsupported law variant {self.law_variant!r}")

    def density_law(self, grid: SpaceGrid) -> InitialLaw:
        """The law the grid solvers start from: a point mass is mollified."""
        law = self.build_law()
        if isinstance(law, DiracLaw):
            eps = self.mollifier_eps if self.mollifier_eps is not None else 4.0 * grid.dx
            return law.mollified(eps)
        return law

    def path_seed(self, k: int) -> int:
        return substream_seed(self.master_seed, STREAM_PATHS, k)

    def initial_seed(self, k: int = 0) -> int:
        return substream_seed(self.master_seed, STREAM_INITIAL, k)


# ---------------------------------------------------------------------------
# comparison metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    """L1/L2/sup/first-moment distances between two fields on one grid."""

    label: str
    times: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    sup: np.ndarray
    moment_diff: np.ndarray
    metadata: dict = field(default_factory=dict)

    def at_final(self, metric: str) -> float:
        return float(getattr(self, metric)[-1])

    def max_over_t(self, metric: str) -> float:
        return float(np.max(getattr(self, metric)))

    def rows(self):
        out = []
        for metric in ("l1", "l2", "sup", "moment_diff"):
            arr = getattr(self, metric)
            for t, v in zip(self.times, arr):
                out.append((metric, t, v))
            out.append((f"{metric}_final", self.times[-1], arr[-1]))
            out.append((f"{metric}_max", float("nan"), np.max(arr)))
        return out


def compare_fields(a: DensityField, b: DensityField, label: str = "", metadata: Optional[dict] = None) -> ComparisonReport:
    """Slice-wise distance metrics between two fields on identical grids."""
    if a.space_grid != b.space_grid or a.time_grid != b.time_grid:
        raise InputError("fields live on different grids")
    if not np.array_equal(a.stored_steps, b.stored_steps):
        raise InputError("fields stored at different time knots")
    dx = a.space_grid.dx
    diff = a.values - b.values
    l1 = np.trapezoid(np.abs(diff), dx=dx, axis=1)
    l2 = np.sqrt(np.trapezoid(diff * diff, dx=dx, axis=1))
    sup = np.max(np.abs(diff), axis=1)
    x = a.space_grid.x
    moment = np.abs(np.trapezoid(x * diff, dx=dx, axis=1))
    meta = {"version": __version__}
    meta.update(metadata or {})
    return ComparisonReport(label, a.times.copy(), l1, l2, sup, moment, meta)


# ---------------------------------------------------------------------------
# closed-form fields
# ---------------------------------------------------------------------------

def closed_form_field(
    config: ExperimentConfig,
    path: BrownianPath,
    grid: SpaceGrid,
    stored_steps: np.ndarray,
) -> DensityField:
    """Evaluate the model's explicit conditional density along one path at
    the stored knots, on the same lattice as the grid solver.

    The translate centers follow the solver's noise convention: in ``ito``
    mode the geometric family uses the log-drift alpha - beta^2/2 (the
    Ito-corrected exponent), in ``stratonovich`` mode the bare alpha.  The
    quadratic-drift family has a closed form only in ``stratonovich`` mode
    (see the validation report for the measured gap in the other reading).
    """
    a = float(config.model_params["alpha"])
    b = float(config.model_params["beta"])
    law = config.density_law(grid)
    tg = path.time_grid
    sgn = config.noise_sign
    values = np.empty((stored_steps.size, grid.n_points))

    if config.model_variant == "constant":
        for r, j in enumerate(stored_steps):
            values[r] = shift_delta(law, a * tg.t[j], sgn * b * path.values[j], grid.x)
    elif config.model_variant == "gbm":
        if not isinstance(law, LogNormalLaw):
            raise ConfigError("gbm closed form needs a lognormal initial law")
        H = law.log_law()
        a_log = a - 0.5 * b * b if config.noise_mode == "ito" else a
        for r, j in enumerate(stored_steps):
            values[r] = gbm_delta(H, a_log * tg.t[j], sgn * b * path.values[j], grid.x)
    elif config.model_variant == "burgers":
        params = BurgersParams(a, b)
        for r, j in enumerate(stored_steps):
            t = float(tg.t[j])
            if t == 0.0:
                values[r] = np.asarray(law.density(grid.x), dtype=float)
            else:
                values[r] = burgers_delta(law, params, t, sgn * path.values[j], grid.x)
    else:
        raise ConfigError(f"no closed form for model variant {config.model_variant!r}")

    mass_hist = np.trapezoid(values, dx=grid.dx, axis=1)
    return DensityField(
        time_grid=tg,
        space_grid=grid,
        values=values,
        stored_steps=np.asarray(stored_steps, dtype=np.int64),
        mass_history=mass_hist,
        min_history=values.min(axis=1),
        boundary_max=float(np.max(np.abs(values[:, [0, -1]]))),
    )


# ---------------------------------------------------------------------------
# CSV / SVG emission
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return FLOAT_FMT % v


def write_field_csv(field_: DensityField, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("t,x,m\n")
        x = field_.space_grid.x
        for r, t in enumerate(field_.times):
            ts = _fmt(t)
            vals = field_.values[r]
            fh.writelines(f"{ts},{_fmt(x[i])},{_fmt(vals[i])}\n" for i in range(x.size))


def write_mass_csv(field_: DensityField, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("t,mass,min_value\n")
        t = field_.time_grid.t
        for j in range(t.size):
            fh.write(f"{_fmt(t[j])},{_fmt(field_.mass_history[j])},{_fmt(field_.min_history[j])}\n")


def write_curve_csv(curves: list, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("t,L,estimator,x,epsilon\n")
        for c in curves:
            eps = "" if c.epsilon is None else _fmt(c.epsilon)
            for t, v in zip(c.time_grid.t, c.values):
                fh.write(f"{_fmt(t)},{_fmt(v)},{c.estimator},{_fmt(c.x)},{eps}\n")


def write_report_csv(report: ComparisonReport, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("metric,slice_t,value\n")
        for metric, t, v in report.rows():
            ts = "" if math.isnan(t) else _fmt(t)
            fh.write(f"{metric},{ts},{_fmt(v)}\n")


def write_convergence_csv(residuals: np.ndarray, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,sup_diff\n")
        for i, r in enumerate(residuals, start=1):
            fh.write(f"{i},{_fmt(r)}\n")


def write_overlay_svg(fields: dict, grid: SpaceGrid, path: Path, title: str) -> None:
    """Convenience plot of final slices; never parsed by tests."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for name, slice_vals in fields.items():
        ax.plot(grid.x, slice_vals, label=name, lw=1.2)
    ax.set_xlabel("x")
    ax.set_ylabel("m")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    exit_code: int
    messages: list
    files: list
    reports: list


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Execute the enabled solvers on shared seeded paths and emit artifacts.

    Exit code 0 when every enabled tolerance assertion holds, 1 on a
    tolerance failure (the failing metric is named), 3 on solver failure.
    Identical configs give byte-identical files for any DONSKER_THREADS.
    """
    out = Path(out_dir or config.output_dir or "donskerlab-out")
    out.mkdir(parents=True, exist_ok=True)
    grid = config.space_grid()
    tg = config.time_grid()
    model = config.build_model()
    law = config.build_law()
    density_law = config.density_law(grid)
    messages: list = []
    files: list = []
    reports: list = []

    paths = [sample_brownian_path(tg, config.path_seed(k)) for k in range(config.n_paths)]

    try:
        fp_fields = {}
        if "fp" in config.solvers:
            init = tabulate_density(density_law, grid)

            def _solve(k):
                return solve_fp(
                    model, init, paths[k], grid,
                    noise_mode=config.noise_mode,
                    noise_sign=config.noise_sign,
                    store_stride=config.store_stride,
                )

            for k, fld in enumerate(parallel_map(_solve, list(range(config.n_paths)))):
                fp_fields[k] = fld
                write_field_csv(fld, out / f"fp_path{k}.csv")
                write_mass_csv(fld, out / f"fp_mass_path{k}.csv")
                files += [out / f"fp_path{k}.csv", out / f"fp_mass_path{k}.csv"]

        cf_fields = {}
        if "closedform" in config.solvers:
            for k, path in enumerate(paths):
                stored = fp_fields[k].stored_steps if k in fp_fields else np.arange(
                    0, tg.n_steps + 1, config.store_stride, dtype=np.int64)
                if stored[-1] != tg.n_steps:
                    stored = np.append(stored, tg.n_steps)
                cf = closed_form_field(config, path, grid, stored)
                cf_fields[k] = cf
                write_field_csv(cf, out / f"closedform_path{k}.csv")
                files.append(out / f"closedform_path{k}.csv")
                messages.append(
                    f"closedform path{k}: final mass {mass(cf.values[-1], grid):.9f}")

        particle_kde = None
        if "particle" in config.solvers:
            from .particle import _binned_density, silverman_bandwidth

            traj = simulate_particles(
                model, law, paths[0], config.n_particles, config.initial_seed(0),
                closure_grid=grid if isinstance(model, BurgersDrift) else None,
                store_stride=max(config.store_stride, tg.n_steps // 8 or 1),
            )
            particle_kde = empirical_density(traj.final, grid, config.kde_bandwidth)
            # density slices along the trajectory (binned estimate per snapshot,
            # exact kernel estimate for the final slice)
            with open(out / "particle_density_path0.csv", "w") as fh:
                fh.write("t,x,m\n")
                for snap in traj.snapshots[:-1]:
                    bw = config.kde_bandwidth
                    if bw is None:
                        bw = silverman_bandwidth(snap.positions)
                    vals = _binned_density(snap.positions, grid, bw)
                    ts = _fmt(snap.time)
                    fh.writelines(
                        f"{ts},{_fmt(grid.x[i])},{_fmt(vals[i])}\n"
                        for i in range(grid.n_points))
                t_last = _fmt(tg.horizon)
                fh.writelines(
                    f"{t_last},{_fmt(grid.x[i])},{_fmt(particle_kde.values[i])}\n"
                    for i in range(grid.n_points))
            files.append(out / "particle_density_path0.csv")
            messages.append(
                f"particle ensemble: mean {traj.final.mean():.6f}, "
                f"KDE mass {particle_kde.mass():.9f}")

        if "volterra" in config.solvers:
            if config.model_variant != "constant":
                raise ConfigError("volterra solver requires the constant model variant")
            kern = VolterraKernel(
                float(config.model_params["alpha"]),
                float(config.model_params["beta"]),
                drift_sign=config.volterra_drift_sign,
            )

            def _vsolve(k):
                return solve_volterra(
                    kern, law, paths[k], grid,
                    mollifier_eps=config.mollifier_eps,
                    max_iter=80,
                )

            for k, sol in enumerate(parallel_map(_vsolve, list(range(config.n_paths)))):
                write_field_csv(sol.field, out / f"volterra_path{k}.csv")
                write_convergence_csv(sol.residuals, out / f"volterra_convergence_path{k}.csv")
                files += [out / f"volterra_path{k}.csv", out / f"volterra_convergence_path{k}.csv"]
                messages.append(f"volterra path{k}: {sol.iterations} sweeps")

        if "localtime" in config.solvers:
            eps = config.localtime_epsilon
            if eps is None:
                eps = max(2.0 * math.sqrt(tg.dt), 4.0 * grid.dx)
            curves = []
            # one model trajectory on the common path for the band estimator
            lone = simulate_particles(
                model, density_law, paths[0], 2,
                substream_seed(config.master_seed, STREAM_LOCALTIME),
                closure_grid=grid if isinstance(model, BurgersDrift) else None,
            )
            x_path = np.array([snap.positions[0] for snap in lone.snapshots])
            curves.append(occupation_local_time(x_path, tg, config.localtime_x, eps))
            if 0 in fp_fields and fp_fields[0].stored_steps.size == tg.n_steps + 1:
                curves.append(density_local_time(fp_fields[0], config.localtime_x))
            write_curve_csv(curves, out / "localtime_path0.csv")
            files.append(out / "localtime_path0.csv")

        # comparisons
        failed_metric = None
        for k in sorted(set(fp_fields) & set(cf_fields)):
            rep = compare_fields(
                fp_fields[k], cf_fields[k], label=f"fp_vs_closedform_path{k}",
                metadata={"seed": config.path_seed(k), "noise_mode": config.noise_mode},
            )
            reports.append(rep)
            write_report_csv(rep, out / f"compare_fp_closedform_path{k}.csv")
            files.append(out / f"compare_fp_closedform_path{k}.csv")
            messages.append(
                f"fp vs closedform path{k}: L1(T)={rep.at_final('l1'):.3e} "
                f"sup(T)={rep.at_final('sup'):.3e}")
            if config.plots:
                svg = out / f"overlay_fp_closedform_path{k}.svg"
                write_overlay_svg(
                    {"fp": fp_fields[k].values[-1], "closed form": cf_fields[k].values[-1]},
                    grid, svg, rep.label)
                files.append(svg)
            if config.l1_tol is not None and rep.at_final("l1") > config.l1_tol:
                failed_metric = failed_metric or (f"l1 path{k}", rep.at_final("l1"), config.l1_tol)
            if config.sup_tol is not None and rep.at_final("sup") > config.sup_tol:
                failed_metric = failed_metric or (f"sup path{k}", rep.at_final("sup"), config.sup_tol)

        if particle_kde is not None and 0 in cf_fields:
            diff = particle_kde.values - cf_fields[0].values[-1]
            l1 = float(np.trapezoid(np.abs(diff), dx=grid.dx))
            messages.append(f"particle KDE vs closedform: L1(T)={l1:.3e}")
            if config.l1_tol is not None and l1 > config.l1_tol:
                failed_metric = failed_metric or ("l1 particle", l1, config.l1_tol)

    except ConfigError:
        raise
    except DonskerLabError as e:
        messages.append(f"solver failure: {e}")
        return ExperimentResult(3, messages, files, reports)

    if failed_metric is not None:
        name, got, tol = failed_metric
        messages.append(f"tolerance failure: {name} = {got:.6g} exceeds {tol:.6g}")
        return ExperimentResult(1, messages, files, reports)
    return ExperimentResult(0, messages, files, reports)
