"""
Exception hierarchy for Kessel
Each family maps to one CLI exit code.
"""

from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_BLOWUP = 4


class KesselError(Exception):
    """Base class for all Kessel errors"""

    exit_code = EXIT_INVARIANT


class ConfigError(KesselError, ValueError):
    """Invalid configuration or parameter gate violation"""

    exit_code = EXIT_CONFIG


class SupercriticalChi(ConfigError):
    """chi outside the admissible range for the effective dimension"""


class InvariantViolation(KesselError, RuntimeError):
    """A discrete invariant of the scheme failed"""

    exit_code = EXIT_INVARIANT


class PositivityViolation(InvariantViolation):
    """Cell density undershoot beyond the clamp threshold"""

    def __init__(self, message: str, min_value: float, t: float):
        super().__init__(message)
        self.min_value = min_value
        self.t = t


class MassDrift(InvariantViolation):
    """Total mass left its conservation window"""


class SolverDivergence(KesselError, RuntimeError):
    """Linear solver failed to reach its tolerance"""

    exit_code = EXIT_INVARIANT

    def __init__(self, message: str, residual: float, iterations: int, tol: float):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.tol = tol

    def report(self) -> Dict[str, Any]:
        return {'residual': self.residual, 'iterations': self.iterations, 'tol': self.tol}


class BlowUpSuspected(KesselError, RuntimeError):
    """max u crossed the configured ceiling"""

    exit_code = EXIT_BLOWUP

    def __init__(self, message: str, t: float, max_u: float, snapshot: Optional[Any] = None):
        super().__init__(message)
        self.t = t
        self.max_u = max_u
        self.snapshot = snapshot


class InsufficientSampling(ConfigError):
    """Stored trajectory too coarse in time for the requested check"""
