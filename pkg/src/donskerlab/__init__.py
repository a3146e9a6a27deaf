"""donskerlab: conditional densities and local times of mean-field SDEs
driven by a common Brownian path.

Solvers: a pathwise grid scheme for the conditional Fokker-Planck SPDE, an
interacting particle system, a stochastic Volterra kernel equation, and the
explicit closed forms that cross-validate them, together with dual local-time
estimators and a reproducible experiment harness.
"""

from .closedform import (
    BurgersParams,
    PathFunctionals,
    brownian_delta_conditional,
    brownian_delta_expectation,
    burgers_delta,
    burgers_k,
    cole_hopf_phi,
    gbm_delta,
    path_functionals,
    reconstruct_state,
    shift_delta,
)
from .errors import (
    CflError,
    ConfigError,
    DegenerateRunError,
    DonskerLabError,
    InputError,
    MassDeficitWarning,
    NonConvergenceError,
    SolverBlowupError,
)
from .fpsolver import CflLimits, DensityField, mass, solve_fp, tabulate_density, translate
from .localtime import (
    LocalTimeCurve,
    density_local_time,
    expected_band_local_time_bm,
    expected_local_time_bm,
    occupation_local_time,
)
from .model import (
    BrownianPath,
    BurgersDrift,
    ConstantCoefficients,
    DensitySlice,
    DiracLaw,
    GaussianLaw,
    GeneralCoefficients,
    LogNormalLaw,
    MeanFieldGBM,
    SpaceGrid,
    StateFreeCoefficients,
    TabulatedLaw,
    TimeGrid,
    eval_coefficients,
    sample_brownian_path,
    sample_initial,
    substream_rng,
    substream_seed,
)
from .particle import (
    EnsembleTrajectory,
    ParticleEnsemble,
    conditional_expectation,
    empirical_density,
    silverman_bandwidth,
    simulate_particles,
)
from .volterra import (
    VolterraKernel,
    VolterraSolution,
    solve_volterra,
    volterra_kernel,
    volterra_kernel_deriv,
)

__version__ = "0.1.0"
