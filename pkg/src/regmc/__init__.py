"""Regression-based Monte Carlo integration.

Fit an analytically integrable model to integrand samples by least squares,
use it as a control variate, and keep the constant function in the model so
the estimator never does worse than plain Monte Carlo in expectation.
"""

from .basis import (
    BasisSet,
    eval_basis,
    make_basis,
    make_gaussian,
    make_polynomial,
    make_sine,
    make_step,
    matched_basis,
)
from .core import (
    BasisTooLarge,
    DimensionMismatch,
    EmptyBatch,
    EstimateReport,
    MisSample,
    NonFiniteSample,
    RegMCError,
    RngConfig,
    SampleBatch,
    SgdDiverged,
    Solver,
    mc_estimate,
    mse,
    rel_mse,
)
from .estimator import (
    IncrementalState,
    cv_estimate,
    fit_model,
    incremental_init,
    incremental_run,
    incremental_step,
    mis_cv_estimate,
    mis_cv_estimate_batches,
)
from .regression import (
    ModelFunction,
    NormalSystem,
    SgdConfig,
    accumulate,
    eval_model,
    model_integral,
    normal_system,
    residual_estimate,
    solve_direct,
    solve_sgd,
)

__version__ = "0.1.0"
