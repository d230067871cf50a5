"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage/configuration problems exit 1,
unreadable or inconsistent data files exit 2 (fit non-convergence is not an
exception and exits 3 at the command level).
"""


class QpBurstError(Exception):
    """Base class for all package errors."""


class DomainError(QpBurstError, ValueError):
    """An argument is outside the physically meaningful domain."""


class ConfigError(QpBurstError, ValueError):
    """A configuration value or combination is invalid."""


class DataError(QpBurstError, RuntimeError):
    """A data file is missing, malformed, or internally inconsistent."""
