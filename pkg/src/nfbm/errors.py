"""Exception types raised by the library.

All of them derive from ``ValueError`` or ``ArithmeticError`` so callers that
only care about "bad input" vs "numerics broke" can catch the builtin base.
"""


class DomainError(ValueError):
    """Argument outside the domain of a function or model."""


class UnsupportedOrderError(DomainError):
    """Operation not defined for the requested order n."""


class RoughnessError(DomainError):
    """Requested derivative does not exist for a path of this order."""


class PreconditionError(ValueError):
    """Input object lacks data the operation needs (e.g. stored increments)."""


class NumericalError(ArithmeticError):
    """Base class for numerical failures (exit code 3 in the CLI)."""


class SingularMatrixError(NumericalError):
    pass


class ConditioningError(NumericalError):
    """Cholesky failed even after the maximal jitter."""


class EmbeddingError(NumericalError):
    """Circulant embedding has a significantly negative eigenvalue."""


class AccuracyError(NumericalError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ConvergenceError(NumericalError):
    pass
