"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class CarqError(Exception):
    exit_code = 1


class TableParseError(CarqError):
    exit_code = 2


class ConfigParseError(CarqError):
    exit_code = 2


class ValidationError(CarqError, ValueError):
    exit_code = 3


class InfeasibleError(CarqError):
    """No Lagrange multiplier meets the average-power constraint."""

    exit_code = 4


class NumericalError(CarqError, ArithmeticError):
    exit_code = 5


class DivergenceError(NumericalError):
    """An integral of 1/snr was requested over an interval touching zero."""
