"""Damped (tamed) explicit Euler schemes for SDEs with superlinearly growing
drift and diffusion coefficients, and the Monte Carlo machinery to measure
their strong, uniform and pathwise convergence rates and moment stability.
"""

__version__ = "0.1.0"

from .analysis import (
    AsRateReport,
    ErrorEntry,
    ErrorReport,
    MomentEntry,
    MomentReport,
    OrderFit,
    as_rate_diagnostic,
    error_report,
    fit_order,
    moment_diagnostic,
    one_step_diagnostic,
    strong_error,
    uniform_error,
)
from .brownian import BrownianTree, aggregate_increments, path_rng
from .config import ConfigError, ExperimentConfig, load_config
from .core import (
    ConditionCertificate,
    ConditionReport,
    KernelSpec,
    ModelEvaluationError,
    PValidation,
    SampleSpec,
    SdeProblem,
    TamingScheme,
    validate_certificate,
    validate_p_condition,
)
from .integrator import (
    CoupledResult,
    GridPath,
    SingleResolutionStats,
    euler_step,
    kappa,
    run_coupled_mc,
    run_single_resolution,
    simulate_coupled,
    simulate_path,
)
from .kernels import HAVE_NUMBA, resolve_backend, set_threads, simulate_batch
from .models import (
    MODELS,
    ModelSpec,
    get_model,
    ginzburg_landau_model,
    linear_model,
    three_half_model,
)
from .taming import (
    TamedCoefficients,
    check_B1_rate,
    check_B2,
    check_B3,
    tame,
    tame_identity,
    tame_model1,
    tame_model2,
)

__all__ = [
    "AsRateReport", "BrownianTree", "ConditionCertificate", "ConditionReport",
    "ConfigError", "CoupledResult", "ErrorEntry", "ErrorReport",
    "ExperimentConfig", "GridPath", "HAVE_NUMBA", "KernelSpec", "MODELS",
    "ModelEvaluationError", "ModelSpec", "MomentEntry", "MomentReport",
    "OrderFit", "PValidation", "SampleSpec", "SdeProblem",
    "SingleResolutionStats", "TamedCoefficients", "TamingScheme",
    "aggregate_increments", "as_rate_diagnostic", "check_B1_rate", "check_B2",
    "check_B3", "error_report", "euler_step", "fit_order", "get_model",
    "ginzburg_landau_model", "kappa", "linear_model", "load_config",
    "moment_diagnostic", "one_step_diagnostic", "path_rng", "resolve_backend",
    "run_coupled_mc", "run_single_resolution", "set_threads", "simulate_batch",
    "simulate_coupled", "simulate_path", "strong_error", "tame",
    "tame_identity", "tame_model1", "tame_model2", "three_half_model",
    "uniform_error", "validate_certificate", "validate_p_condition",
]
