"""Robust maximum-correntropy Kalman filtering with per-step bandwidth selection."""

from .bandwidth import BandwidthSelection, baseline_bandwidth, jkb, select_bandwidth
from .config import BandwidthGrid, FilterConfig, FilterState, StepInfo
from .core import (
    AugmentedFactors,
    FPIResult,
    FPIStatus,
    build_augmented,
    compute_pi,
    fpi_update,
    gain,
    posterior_covariance,
    predict,
    weighted_errors,
)
from .diagnostics import (
    ContractionReport,
    GrammianReport,
    contraction_bounds,
    grammians,
    risk_positivity_audit,
    stability_condition,
)
from .exceptions import (
    AllCandidatesFailed,
    FactorizationFailed,
    FilterError,
    GramSingular,
    InnovationSingular,
    MaxIterations,
    ObservabilityDegenerate,
    PiSingular,
    RiskTooLarge,
    ZeroInnovation,
)
from .filter import FAMILY, FilterRun, RobustCorrentropyKalmanFilter, make_filter, run_filter, step
from .noise import GaussianMixture, equivalent_covariance, gaussian_kernel, sample, sample_correntropy
from .system import Trajectory, UncertainLinearModel, propagate_deterministic, simulate

__version__ = "0.1.0"

__all__ = [
    "AllCandidatesFailed",
    "AugmentedFactors",
    "BandwidthGrid",
    "BandwidthSelection",
    "ContractionReport",
    "FAMILY",
    "FPIResult",
    "FPIStatus",
    "FactorizationFailed",
    "FilterConfig",
    "FilterError",
    "FilterRun",
    "FilterState",
    "GaussianMixture",
    "GramSingular",
    "GrammianReport",
    "InnovationSingular",
    "MaxIterations",
    "ObservabilityDegenerate",
    "PiSingular",
    "RiskTooLarge",
    "RobustCorrentropyKalmanFilter",
    "StepInfo",
    "Trajectory",
    "UncertainLinearModel",
    "ZeroInnovation",
    "baseline_bandwidth",
    "build_augmented",
    "compute_pi",
    "contraction_bounds",
    "equivalent_covariance",
    "fpi_update",
    "gain",
    "gaussian_kernel",
    "grammians",
    "jkb",
    "make_filter",
    "posterior_covariance",
    "predict",
    "propagate_deterministic",
    "risk_positivity_audit",
    "run_filter",
    "sample",
    "sample_correntropy",
    "select_bandwidth",
    "simulate",
    "stability_condition",
    "step",
    "weighted_errors",
]
