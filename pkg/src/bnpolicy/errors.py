"""Exception types shared across the package."""


class BnpolicyError(Exception):
    """Base class for all package errors."""


class DataValidationError(BnpolicyError):
    """Raised when input data violates a structural invariant."""


class RankDeficiencyError(BnpolicyError):
    """Raised when a regression design is rank deficient.

    Carries the index of the first dependent column so callers can name
    the offending term.
    """

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class SingularSystemError(BnpolicyError):
    """Raised when an estimating-equation system is (near-)singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class EstimationError(BnpolicyError):
    """Raised when an estimator cannot be run on the supplied data."""
