"""Exception hierarchy shared by every module."""


class DiceError(Exception):
    """Base class for all package errors."""


class DimensionError(DiceError, ValueError):
    """Array shapes or lengths do not agree."""


class ContractError(DiceError, ValueError):
    """A documented precondition was violated."""


class ConfigError(DiceError, ValueError):
    """An experiment configuration is invalid."""


class NumericalError(DiceError, ArithmeticError):
    """A NaN or Inf appeared in an iterate.

    ``where`` carries the location (for instance ``{"t": 12, "k": 3}``).
    """

    def __init__(self, message, where=None):
        self.where = dict(where or {})
        if self.where:
            loc = ", ".join(f"{k}={v}" for k, v in self.where.items())
            message = f"{message} ({loc})"
        super().__init__(message)


class DivergenceError(NumericalError):
    """An iterative method blew up."""
