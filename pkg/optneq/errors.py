"""
Exception hierarchy for optneq.

Every failure the library raises on purpose derives from ``OptNeqError`` and
carries the CLI exit code it maps to. Tikhonov sub-solves do not raise on
non-convergence; they return a result with ``converged=False`` instead.
"""

from __future__ import annotations


# ============================================================================
# EXIT CODES
# ============================================================================
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGENCE = 2
EXIT_IO = 3


class OptNeqError(Exception):
    """Base class for all optneq errors."""

    exit_code = EXIT_VALIDATION


class ConfigurationError(OptNeqError):
    """A precondition of a solver or experiment does not hold.

    ``assumption`` names the violated assumption (e.g. ``"row-stochastic R"``).
    """

    def __init__(self, message: str, assumption: str | None = None):
        self.assumption = assumption
        if assumption:
            message = f"{message} [violates: {assumption}]"
        super().__init__(message)


class AssumptionError(OptNeqError):
    """A structural invariant of a topology or mixing matrix is violated."""


class CapacityError(OptNeqError):
    """Requested edge count cannot be realised on the given node count."""


class NumericalError(OptNeqError):
    """An iterative numerical routine did not converge."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual={residual:.3e})")


class DivergenceError(OptNeqError):
    """Iterates became non-finite."""

    exit_code = EXIT_DIVERGENCE

    def __init__(self, k: int, max_abs: float):
        self.k = k
        self.max_abs = max_abs
        super().__init__(f"iterates diverged at k={k} (max |entry| before failure: {max_abs:.3e})")


class FitError(OptNeqError):
    """A decay fit cannot be computed on the requested window."""


class AlignmentError(OptNeqError):
    """Sample-path logs are not aligned on the same iteration indices."""
