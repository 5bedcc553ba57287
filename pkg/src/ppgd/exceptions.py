"""Exception types shared across the package."""


class PPGDError(Exception):
    """Base class for all errors raised by :mod:`ppgd`."""


class ConfigurationError(PPGDError, ValueError):
    """Invalid solver configuration, shape mismatch or malformed input file."""


class DomainError(PPGDError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(PPGDError, ValueError):
    """Input data violates a documented precondition (e.g. nonzero mean)."""


class DivergenceError(PPGDError, RuntimeError):
    """An iteration produced a non-finite value.

    Attributes
    ----------
    last_iterate : object
        The last iterate whose entries were all finite.
    trace : list
        Diagnostics recorded up to the failure.
    """

    def __init__(self, message, last_iterate=None, trace=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.trace = [] if trace is None else trace


class BudgetExhaustedError(PPGDError, RuntimeError):
    """An inner solve hit its iteration cap while strict mode was requested."""
