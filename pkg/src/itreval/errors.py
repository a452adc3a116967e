"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class ItrevalError(Exception):
    exit_code = 1
    module = "itreval"


class ConfigError(ItrevalError, ValueError):
    """Invalid parameters or run configuration."""

    exit_code = 2


class DataError(ItrevalError, ValueError):
    """Input data violates a contract (non-binary treatment, missing cell, empty arm...)."""

    exit_code = 3


class NumericalError(ItrevalError, ArithmeticError):
    exit_code = 4


class RankDeficiencyError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class BootstrapError(NumericalError):
    pass
