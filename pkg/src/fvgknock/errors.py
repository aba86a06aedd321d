"""Exception types shared across the package.

The CLI maps ValidationError to exit code 1 and NumericalError to exit
code 2; everything else is a bug.
"""


class FvgError(Exception):
    """Base class for all package errors."""


class ValidationError(FvgError):
    """Bad inputs: inconsistent dimensions, invalid configuration, malformed files."""


class NumericalError(FvgError):
    """Numerical failure: matrix not positive definite, singular Schur block, etc."""
