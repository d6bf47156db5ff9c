"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class RelgatError(Exception):
    """Base class for all package errors."""


class ConfigError(RelgatError):
    """Invalid configuration, shapes, or API usage."""


class StructuralError(ConfigError):
    """Graph structure violates an operation's preconditions."""


class UndefinedMetricError(RelgatError):
    """A metric is undefined for the given input (e.g. a single row)."""


class DataError(RelgatError):
    """A dataset directory or file could not be loaded."""


class NumericError(RelgatError):
    """A non-finite value was produced during computation."""
