"""
Exception hierarchy shared by the library modules and the command-line front end.

main.py maps these onto exit codes:
    ConfigError -> 1, DomainError (and GuardError) -> 2.
"""


class VecSpinError(Exception):
    """Base class for all errors raised by this project."""


class ConfigError(VecSpinError, ValueError):
    """Malformed or incomplete configuration."""


class DomainError(VecSpinError, ValueError):
    """Input outside the mathematical domain of an operation.

    Raised for dimension mismatches, PSD-order violations, non-monotone paths
    and increments of grad xi that are not positive semi-definite.
    """


class GuardError(DomainError):
    """A size guard (quadrature node count, enumeration size) was exceeded."""
