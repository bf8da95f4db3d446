"""Exception hierarchy shared by every module."""


class ConslawError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ConslawError, ValueError):
    """Input violates a documented precondition."""


class FormatError(ValidationError):
    """A data file could not be parsed."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class DomainError(ValidationError):
    """A library term was evaluated outside its natural domain (e.g. ln of x <= 0)."""


class ConfigurationError(ConslawError, ValueError):
    """An experiment, candidate menu or CLI configuration is unusable."""


class NumericalError(ConslawError, ArithmeticError):
    """A numerical routine failed (SVD non-convergence, degenerate pivots)."""


class IntegrationError(NumericalError):
    """ODE integration produced a non-finite state."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DegeneracyError(NumericalError):
    """Coefficient vectors are numerically rank deficient."""
