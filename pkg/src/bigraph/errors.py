"""Exception types raised across the package.

Validation problems derive from ``ValueError`` so callers that only care
about "bad input" can catch that; numerical failures derive from
``ArithmeticError``.
"""


class BigraphError(Exception):
    pass


class ValidationError(BigraphError, ValueError):
    pass


class DimensionMismatch(ValidationError):
    pass


class AsymmetricMatrix(ValidationError):
    pass


class ProbabilityOutOfRange(ValidationError):
    pass


class UnsupportedK(ValidationError):
    pass


class InvalidEpsilon(ValidationError):
    pass


class InvalidReduction(ValidationError):
    pass


class RegimeMismatch(ValidationError):
    pass


class OmegaTooSmall(ValidationError):
    pass


class TooLarge(ValidationError):
    pass


class CapacityExceeded(BigraphError, MemoryError):
    pass


class NumericError(BigraphError, ArithmeticError):
    pass


class NoConvergence(NumericError):
    pass


class NonpositiveDenominator(NumericError):
    pass


class Divergent(NumericError):
    pass
