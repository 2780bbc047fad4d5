"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class LandsegError(Exception):
    """Base class for all package errors."""


class ConfigError(LandsegError):
    """Invalid configuration: bad flag values, inconsistent settings."""


class DataError(LandsegError):
    """Invalid input data: unreadable files, shape mismatches, bad labels."""


class NumericError(LandsegError):
    """Numerical failure: divergence, degenerate decompositions."""
