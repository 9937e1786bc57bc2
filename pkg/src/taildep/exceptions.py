"""Exception types raised across the package."""


class TailDepError(Exception):
    """Base class for all package errors."""


class InvalidCorrelation(TailDepError, ValueError):
    """Raised when a matrix is not an admissible correlation matrix."""


class NotPositiveDefinite(InvalidCorrelation):
    pass


class DiagonalNotUnit(InvalidCorrelation):
    pass


class EntryOutOfRange(InvalidCorrelation):
    pass


class DomainError(TailDepError, ValueError):
    """Raised when an argument lies outside the domain of a closed form."""


class ConvergenceFailure(TailDepError, RuntimeError):
    pass


class QuadratureFailure(TailDepError, RuntimeError):
    pass


class TailUnderflow(TailDepError, ArithmeticError):
    """A probability fell below the supported floor of ``exp(-600)``.

    The (unreliable) log-probability reached by the quadrature is kept in
    ``log_value`` so callers can still see how deep the tail was.
    """

    def __init__(self, log_value, floor=-600.0):
        super().__init__(
            f"log-probability {log_value:.6g} is below the supported floor {floor:g}"
        )
        self.log_value = log_value
        self.floor = floor


class NoCertifiedSubset(TailDepError, RuntimeError):
    pass


class DegenerateSample(TailDepError, ValueError):
    pass


class InsufficientTail(TailDepError, ValueError):
    pass


class PDRepairWarning(UserWarning):
    """Issued when an estimated correlation matrix had to be repaired."""
