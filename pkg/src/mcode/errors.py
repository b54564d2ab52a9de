"""Exception types shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific type that applies rather than bare ValueError.
"""


class McodeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(McodeError):
    """Invalid configuration or usage: bad flag values, unknown method names,
    parameter combinations that cannot be run."""


class DataError(McodeError):
    """Malformed input data: unparseable files, inconsistent field counts,
    non-numeric cells. Messages name the offending line where possible."""


class DomainError(McodeError):
    """A value violates an operation's contract: outputs not in {0,1},
    non-finite features, rates outside (0,1], arity mismatches."""


class NumericalError(McodeError):
    """Numerical failure that prevents producing a result."""
