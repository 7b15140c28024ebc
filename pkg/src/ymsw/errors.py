"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical failures with 3.
"""


class ConfigError(ValueError):
    """Invalid configuration, arguments or input files."""


class DomainError(ValueError):
    """Argument outside the domain of a geometric function."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge or produced non-finite data."""
