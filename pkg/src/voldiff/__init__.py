"""Nonparametric volatility estimation for reflected scalar diffusions on [0, 1]."""

from .basis import (
    EmpiricalMeasure,
    FormSet,
    SplineBasis,
    build_forms,
    centered_offsets,
    empirical_measure,
    form_f,
    form_g,
    form_l,
    form_p,
    matrix_M,
    visit_counts,
)
from .bench import (
    ErrorTable,
    ExperimentConfig,
    diagnostics_sweep,
    error_norm,
    mc_experiment,
    oracle_J,
    rate_regression,
)
from .eigen import (
    Eigenpair,
    centered_pair,
    eigen_fg,
    first_nontrivial_pair,
    gen_sym_eig,
    population_eigenpair,
)
from .estimators import (
    GHRFunction,
    PiecewiseVol,
    crossing_stat,
    fz_forward,
    fz_symmetric,
    ghr,
    occupation_riemann_gap,
    spectral_averaged,
    spectral_tilde,
)
from .model import (
    CoefficientFn,
    DensityGrid,
    DiffusionModel,
    invariant_density,
    reference_model,
    reflected_bm,
    sample_stationary,
    validate_model,
)
from .simulate import (
    FinePath,
    Sample,
    fold,
    min_occupation,
    modulus_of_continuity,
    occupation_density,
    rng_stream,
    simulate_conditioned,
    simulate_path,
    subsample,
)

__version__ = "0.1.0"
