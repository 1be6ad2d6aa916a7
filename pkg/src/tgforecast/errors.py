"""Exception hierarchy.

Each family carries the process exit status the CLI reports for it.
"""


class ForecastError(Exception):
    exit_code = 1


class ConfigError(ForecastError, ValueError):
    exit_code = 2


class DimensionError(ConfigError):
    """Operand shapes do not agree."""


class EmptyInputError(ConfigError):
    """A sequence, table or window set is too short for the requested operation."""


class ContractError(ForecastError, ValueError):
    """A documented precondition was violated by the caller."""


class IngestionError(ForecastError, ValueError):
    exit_code = 3


class FormatError(IngestionError):
    """Binary payload does not match its declared layout."""


class NumericError(ForecastError, ArithmeticError):
    exit_code = 4


class UndefinedMetricError(NumericError):
    """Metric or correlation has a zero denominator for this input."""


IO_EXIT_CODE = 5
