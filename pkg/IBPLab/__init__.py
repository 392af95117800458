"""
IBPLab
Monte Carlo verification of integration-by-parts formulas for semilinear,
stochastic Hamiltonian and delay equations on finite spectral truncations.
"""

from .errors import (ConfigError, ConstraintError, DimensionError, IBPLabError, OracleError, ReductionError,
                     SimulationError)
from .spectral_core import SigmaOperator, SpectralOperator, apply_A, semigroup_apply, sigma_norm

__version__ = "1.0.0"

__all__ = [
    'ConfigError', 'ConstraintError', 'DimensionError', 'IBPLabError', 'OracleError', 'ReductionError',
    'SimulationError', 'SigmaOperator', 'SpectralOperator', 'apply_A', 'semigroup_apply', 'sigma_norm',
    '__version__',
]
