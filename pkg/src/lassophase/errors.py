"""Exception types shared across the package."""

from __future__ import annotations


class LassoPhaseError(Exception):
    """Base class for all package errors."""


class ParameterError(LassoPhaseError, ValueError):
    """Invalid argument or configuration value."""


class DefinitenessError(LassoPhaseError):
    """Matrix expected to be positive definite is not."""


class IllConditioningError(LassoPhaseError):
    """Eigenvalue below the conditioning floor."""


class ConvergenceError(LassoPhaseError):
    """Iterative solver hit its iteration cap before reaching tolerance.

    Carries the last iterate so callers can inspect or resume.
    """

    def __init__(self, message: str, last_iterate=None, kkt_residual: float | None = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.kkt_residual = kkt_residual


class FixedPointError(LassoPhaseError):
    """Fixed-point iteration failed; carries the iterate trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class CalibrationError(LassoPhaseError):
    """No bracket found when inverting the penalty calibration."""


class DivergenceError(LassoPhaseError):
    """Iteration diverging (monitored quantity grew past the guard)."""


class PhaseEstimateError(LassoPhaseError):
    """Phase-boundary Monte Carlo failed (excess dropped replicates)."""


class FitError(LassoPhaseError):
    """Maximum-likelihood fit did not converge."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
