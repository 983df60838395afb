"""Transversal stabilization of constraint-preserving discrete-time systems."""
__version__ = "0.1.0"

from .quaternion import conj, dist_to_s3, exp_vector, mul, norm, random_unit
from .stabilizer import (
    ConstraintSpec,
    ContractionReport,
    NumericalError,
    StabilizerGains,
    check_contraction,
    stabilized_step_gradient,
    stabilized_step_submersion,
    validate_alpha,
)
from .bounds import BoundsRequest, s3_bounds, sampled_bounds
from .ensemble import ConfigError, ExperimentConfig, run_convergence, run_observer
