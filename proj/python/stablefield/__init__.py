"""Simulation and extrapolation of stationary Gaussian and alpha-stable
random fields, backed by the C++ core."""

from ._core import (
    ConfigError,
    CovModel,
    ExtrapProblem,
    ExtrapSolution,
    FitResult,
    GridField,
    GridSpec,
    IntegralField,
    InvalidAlpha,
    Kernel,
    KernelFamily,
    LagBins,
    MeasureSpace,
    NonConvergence,
    SingularProblem,
    StableParams,
    VariogramEstimate,
    VarioModel,
    WeightSolution,
    __version__,
    bisquare_kernel,
    codifference,
    fit_variogram,
    gaussian_sim,
    matheron_estimate,
    moment_constant,
    ordinary_krige,
    parabolic_kernel,
    sample,
    simple_krige,
    solve_extrap,
    sub_gaussian_sim,
    tail_index_estimate,
)

__all__ = [
    "ConfigError",
    "CovModel",
    "ExtrapProblem",
    "ExtrapSolution",
    "FitResult",
    "GridField",
    "GridSpec",
    "IntegralField",
    "InvalidAlpha",
    "Kernel",
    "KernelFamily",
    "LagBins",
    "MeasureSpace",
    "NonConvergence",
    "SingularProblem",
    "StableParams",
    "VariogramEstimate",
    "VarioModel",
    "WeightSolution",
    "__version__",
    "bisquare_kernel",
    "codifference",
    "fit_variogram",
    "gaussian_sim",
    "matheron_estimate",
    "moment_constant",
    "ordinary_krige",
    "parabolic_kernel",
    "sample",
    "simple_krige",
    "solve_extrap",
    "sub_gaussian_sim",
    "tail_index_estimate",
]
