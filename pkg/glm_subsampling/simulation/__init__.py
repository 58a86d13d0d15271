from glm_subsampling.simulation.asymptotics import (
    AsymptoticMatrices,
    compare_efficiency,
    design_matrices,
    monte_carlo_matrices,
    theoretical_variances,
    weighted_variance_identity_check,
)
from glm_subsampling.simulation.designs import DesignKind, DesignSpec, generate_design, generate_response
from glm_subsampling.simulation.metrics import emse, empirical_variance, loewner_leq, relative_efficiency

__all__ = [
    'AsymptoticMatrices',
    'DesignKind',
    'DesignSpec',
    'compare_efficiency',
    'design_matrices',
    'emse',
    'empirical_variance',
    'generate_design',
    'generate_response',
    'loewner_leq',
    'monte_carlo_matrices',
    'relative_efficiency',
    'theoretical_variances',
    'weighted_variance_identity_check',
]
