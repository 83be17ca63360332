"""
Typed errors shared by the numeric modules and the CLI.

Each class carries the exit code the CLI returns for it; `detail` is the
message printed after "error: ".
"""


class MixgradError(Exception):
    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class InvariantError(MixgradError, ValueError):
    exit_code = 4


class DimensionError(InvariantError):
    exit_code = 4


class ConfigError(MixgradError, ValueError):
    exit_code = 4


class DocumentError(MixgradError):
    exit_code = 3


class PlotError(MixgradError):
    exit_code = 3


class NumericalError(MixgradError, ArithmeticError):
    exit_code = 5


class IllConditionedError(NumericalError):
    exit_code = 5


class DegenerateFitWarning(UserWarning):
    """All component likelihoods underflowed; uniform weights were returned."""
