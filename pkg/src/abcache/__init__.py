"""Adams-Bashforth cached extrapolation for diffusion sampling.

Skip network evaluations during denoising by linearly recombining the last k
real outputs instead of reusing the newest one; the reconstruction error is
O(h^k) in the half-logSNR step size. The package provides the schedule
arithmetic, analytic oracles with exact references, the multistep math, the
cached sampler, measurement utilities, and an HTTP service plus CLI.
"""

from .analysis import (
    CostModel,
    OrderEstimate,
    ScaleFactorPoint,
    SimilarityCurve,
    SpeedupReport,
    estimate_order,
    extrapolation_error_sweep,
    scale_factor_curve,
    similarity_curve,
    speedup_report,
)
from .config import ExperimentConfig, load_config, parse_config_text
from .errors import (
    AbCacheError,
    ConfigError,
    DomainError,
    NumericalError,
    SpacingError,
)
from .integrator import (
    ABWeights,
    ExtrapolationCoefficients,
    Mode,
    ab_weights,
    extrapolate_output,
    extrapolation_coefficients,
    lagrange_basis_integral,
    lagrange_extrapolation_weights,
    multistep_step,
    recursion_coefficients_from_weights,
)
from .model import (
    GaussianOracle,
    GaussianVelocityOracle,
    MixtureOracle,
    Predictor,
    exact_marginal_trajectory,
)
from .sampler import (
    OutputCache,
    SamplerConfig,
    Strictness,
    Trajectory,
    first_order_step,
    flow_euler_step,
    run_ab_cache,
    run_baseline,
    scale_factor,
    scale_factor_simplified,
)
from .schedule import (
    GridSpacing,
    NoiseSchedule,
    ScheduleKind,
    StepGrid,
    flow_linear,
    make_grid,
    vp_cosine,
    vp_linear,
)

__version__ = "0.1.0"

__all__ = [
    "ABWeights",
    "AbCacheError",
    "ConfigError",
    "CostModel",
    "DomainError",
    "ExperimentConfig",
    "ExtrapolationCoefficients",
    "GaussianOracle",
    "GaussianVelocityOracle",
    "GridSpacing",
    "MixtureOracle",
    "Mode",
    "NoiseSchedule",
    "NumericalError",
    "OrderEstimate",
    "OutputCache",
    "Predictor",
    "SamplerConfig",
    "ScaleFactorPoint",
    "ScheduleKind",
    "SimilarityCurve",
    "SpacingError",
    "SpeedupReport",
    "StepGrid",
    "Strictness",
    "Trajectory",
    "ab_weights",
    "estimate_order",
    "exact_marginal_trajectory",
    "extrapolate_output",
    "extrapolation_coefficients",
    "extrapolation_error_sweep",
    "first_order_step",
    "flow_euler_step",
    "flow_linear",
    "lagrange_basis_integral",
    "lagrange_extrapolation_weights",
    "load_config",
    "make_grid",
    "multistep_step",
    "parse_config_text",
    "recursion_coefficients_from_weights",
    "run_ab_cache",
    "run_baseline",
    "scale_factor",
    "scale_factor_curve",
    "scale_factor_simplified",
    "similarity_curve",
    "speedup_report",
    "vp_cosine",
    "vp_linear",
]
