"""Exception hierarchy shared by every module."""

from __future__ import annotations

import numpy as np


class BoedError(Exception):
    """Base class for all library errors."""


class ValidationError(BoedError, ValueError):
    """Dimension mismatch or a matrix failing its symmetry/definiteness check."""


class SingularCovarianceError(BoedError, np.linalg.LinAlgError):
    """A covariance that must be positive definite could not be factorized."""


class StabilityError(BoedError):
    """An asymptotic operation was requested for a system that is not stable."""

    def __init__(self, message: str, spectral_radius: float):
        super().__init__(message)
        self.spectral_radius = spectral_radius


class ConvergenceError(BoedError):
    """An iterative solver exhausted its budget; ``last_iterate`` holds its final state."""

    def __init__(self, message: str, last_iterate=None, iterations: int = 0):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations
