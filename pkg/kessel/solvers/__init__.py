"""Elliptic solve, time stepping and initial data"""

from .elliptic import EllipticOperator, SpdSolver, assemble, solve_v, min_v, select_q, v_lq_integral, inverse_v_identity_gap
from .stepper import (
    Params,
    StateSnapshot,
    Stepper,
    BlowupStatus,
    advance,
    chemotactic_flux,
    detect_blowup,
    select_p,
    subcritical_regime,
)
from .initial_data import PROFILES, build_initial_data

__all__ = [
    'EllipticOperator',
    'SpdSolver',
    'assemble',
    'solve_v',
    'min_v',
    'select_q',
    'v_lq_integral',
    'inverse_v_identity_gap',
    'Params',
    'StateSnapshot',
    'Stepper',
    'BlowupStatus',
    'advance',
    'chemotactic_flux',
    'detect_blowup',
    'select_p',
    'subcritical_regime',
    'PROFILES',
    'build_initial_data',
]
