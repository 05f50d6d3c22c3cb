"""
Exception hierarchy for the lasso-condition package.

Library code raises these and never prints. Failed checks (assumption
verdicts, abstentions of the certified selector) are return values, not
exceptions.
"""


class LassoConditionError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(LassoConditionError):
    """Array shapes do not agree, or a statistic needs more entries than given."""


class InvalidInstanceError(LassoConditionError):
    """A LASSO instance violates its invariants (lambda <= 0, non-finite data)."""


class DomainError(LassoConditionError):
    """A numeric argument lies outside the domain of a formula."""


class SolverBudgetError(LassoConditionError):
    """The solver exhausted its sweep budget before reaching the gap tolerance."""

    def __init__(self, message: str, iterations: int = 0, gap: float = float("inf")):
        super().__init__(message)
        self.iterations = iterations
        self.gap = gap


class UncertainSupportError(LassoConditionError):
    """Thresholding is ambiguous: some |x_i| falls inside the numerical-error band of tau."""


class TieError(LassoConditionError):
    """The largest |a_i| of a one-row instance is attained more than once."""


class SingularSigmaSSError(LassoConditionError):
    """The covariance block restricted to the support is not invertible."""


class NonpositiveSigmaHatError(LassoConditionError):
    """The high-probability sigma estimate is not positive, so K-hat is undefined."""


class SearchFailedError(LassoConditionError):
    """No dyadic witness was found at the working precision."""


class PreconditionViolationError(LassoConditionError):
    """A documented precondition of an operation does not hold."""


class PrecisionExceededError(LassoConditionError):
    """A precision-capped reader was asked for more digit levels than it may serve."""


class Delta1ViolationError(LassoConditionError):
    """Served approximation is farther than 2^-n from the input it describes."""


class ConfigError(LassoConditionError):
    """An experiment config is malformed or names an unknown command."""

    def __init__(self, message: str, field: str = None):
        super().__init__(message)
        self.field = field
