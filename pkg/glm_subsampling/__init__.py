__version__ = "0.1.0"

from glm_subsampling.estimators import (
    EstimatorKind,
    PilotOptions,
    SubsampleEstimate,
    VarianceEstimate,
    linear_unweighted_estimate,
    unweighted_estimate,
    variance_estimate,
    weighted_estimate,
)
from glm_subsampling.glm_core import Dataset, FamilyKind, GlmFamily, LinearFamily, LogisticFamily, PoissonFamily
from glm_subsampling.sampling import Criterion, SamplingPlan, os_probabilities, sample_with_replacement
from glm_subsampling.solver import FitOptions, FitResult, fit_mle

__all__ = [
    'Criterion',
    'Dataset',
    'EstimatorKind',
    'FamilyKind',
    'FitOptions',
    'FitResult',
    'GlmFamily',
    'LinearFamily',
    'LogisticFamily',
    'PilotOptions',
    'PoissonFamily',
    'SamplingPlan',
    'SubsampleEstimate',
    'VarianceEstimate',
    'fit_mle',
    'linear_unweighted_estimate',
    'os_probabilities',
    'sample_with_replacement',
    'unweighted_estimate',
    'variance_estimate',
    'weighted_estimate',
]
