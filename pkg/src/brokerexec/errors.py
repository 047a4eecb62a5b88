"""Exception types shared across the package."""


class BrokerExecError(Exception):
    """Base class for all package errors."""


class DomainError(BrokerExecError, ValueError):
    """Parameters outside the admissible domain of the model."""


class OutOfRange(BrokerExecError, ValueError):
    """A time argument lies outside [0, T]."""


class DegenerateError(BrokerExecError, ValueError):
    """The problem is degenerate for the requested operation (e.g. x0 == A)."""


class NumericalError(BrokerExecError, ArithmeticError):
    """Base class for numerical failures."""


class NonFiniteError(NumericalError):
    """A coefficient function became non-finite."""


class NonFiniteState(NumericalError):
    """A simulated state became non-finite.

    ``path_index`` and ``step`` identify the first offending path and step.
    """

    def __init__(self, message, path_index=None, step=None):
        super().__init__(message)
        self.path_index = path_index
        self.step = step


class SingularSystem(NumericalError):
    """A linear system could not be solved."""
