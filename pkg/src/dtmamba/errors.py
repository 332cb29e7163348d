"""Exception hierarchy.

Each class carries the CLI exit status it maps to.
"""


class DTMambaError(Exception):
    exit_code = 1


class ShapeError(DTMambaError, ValueError):
    """Tensor extents do not agree."""


class ConfigError(DTMambaError, ValueError):
    pass


class ContractError(DTMambaError, ValueError):
    """A precondition of an operation was violated by the caller."""


class DataError(DTMambaError, ValueError):
    exit_code = 2


class WindowingError(DataError):
    pass


class NumericError(DTMambaError, ArithmeticError):
    exit_code = 3


class InversionError(NumericError):
    pass


class DivergenceError(NumericError):
    """Training produced a non-finite loss.

    ``report`` holds the per-epoch history up to the failure; the model has
    already been restored to the last good parameters when this is raised.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
