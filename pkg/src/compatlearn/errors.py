"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: parameter/config/usage problems -> 1,
data problems -> 2, numeric failures -> 3.
"""


class CompatLearnError(Exception):
    """Base class for all package errors."""


class ParameterError(CompatLearnError, ValueError):
    """An argument or configuration value violates a precondition."""


class ConfigError(ParameterError):
    """A configuration file is invalid (unknown key, bad value, missing entry)."""


class UsageError(ParameterError):
    """Command line invoked incorrectly."""


class ShapeError(ParameterError):
    """Array dimensions do not match the operation's contract."""


class DataError(CompatLearnError):
    """Dataset content violates an invariant (missing images, bad splits, ...)."""


class ParseError(DataError):
    """An on-disk file could not be parsed; message carries record context."""


class MetricError(DataError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class NumericError(CompatLearnError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""
