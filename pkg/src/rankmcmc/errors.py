"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class RankMCMCError(Exception):
    """Base class for package-specific errors."""


class ConfigError(RankMCMCError):
    """Invalid or inconsistent run configuration."""


class DataError(RankMCMCError):
    """Malformed input data (bad ranking row, unknown level, ...)."""


class NumericalError(RankMCMCError):
    """A numerical routine failed or produced an unusable result."""
