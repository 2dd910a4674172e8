"""Widely linear estimation of real parameter vectors from complex measurements."""

from .algebra import (
    AugmentedCovariance,
    ComplexLinearModel,
    ConjugateStack,
    NoiseStats,
    SingularMatrixError,
    ValidationError,
    build_augmented_covariance,
    hermitian_solve,
    is_proper,
    stack_conjugate,
    to_real_composite,
)
from .estimators import (
    EstimateReport,
    EstimatorId,
    WeightSpec,
    analytic_covariance,
    blue,
    bwlue_real,
    bwlue_real_proper,
    bwlue_standard,
    bwlue_standard_real_part,
    ls,
    ls_real_part,
    real_composite_blue,
    wlls,
    wwlls,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentedCovariance",
    "ComplexLinearModel",
    "ConjugateStack",
    "NoiseStats",
    "SingularMatrixError",
    "ValidationError",
    "build_augmented_covariance",
    "hermitian_solve",
    "is_proper",
    "stack_conjugate",
    "to_real_composite",
    "EstimateReport",
    "EstimatorId",
    "WeightSpec",
    "analytic_covariance",
    "blue",
    "bwlue_real",
    "bwlue_real_proper",
    "bwlue_standard",
    "bwlue_standard_real_part",
    "ls",
    "ls_real_part",
    "real_composite_blue",
    "wlls",
    "wwlls",
]
