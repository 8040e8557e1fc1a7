"""Exception hierarchy shared by all modules.

The CLI maps :class:`ConfigError` to exit status 2 and :class:`NumericalError`
(including its subclasses) to exit status 3.
"""


class BiorthError(Exception):
    """Base class for package errors."""


class ConfigError(BiorthError, ValueError):
    """Invalid ensemble, configuration or parameter combination."""


class ContractError(BiorthError, ValueError):
    """Caller violated a shape or length contract."""


class DomainError(BiorthError, ValueError):
    """Point outside the support of a weight or ensemble."""


class NumericalError(BiorthError, ArithmeticError):
    """A numerical routine failed; ``payload`` carries diagnostic values."""

    def __init__(self, message, **payload):
        super().__init__(message)
        self.payload = payload


class ConvergenceError(NumericalError):
    """Iteration cap reached before the stopping criterion was met."""


class AccuracyError(NumericalError):
    """Quadrature or Monte Carlo error estimate is too large to be useful."""


class PrecisionError(NumericalError):
    """A requested probability is below the resolvable error floor."""
