"""Utility modules for Kessel"""

from .logger import get_logger, KesselLogger
from .errors import (
    KesselError,
    ConfigError,
    SupercriticalChi,
    InvariantViolation,
    PositivityViolation,
    MassDrift,
    SolverDivergence,
    BlowUpSuspected,
    InsufficientSampling,
)

__all__ = [
    'get_logger',
    'KesselLogger',
    'KesselError',
    'ConfigError',
    'SupercriticalChi',
    'InvariantViolation',
    'PositivityViolation',
    'MassDrift',
    'SolverDivergence',
    'BlowUpSuspected',
    'InsufficientSampling',
]
