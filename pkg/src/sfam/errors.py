"""Exception types shared across the package.

The CLI maps DataError to exit code 3 and NumericalError to exit code 4.
"""


class DataError(ValueError):
    """Malformed, missing, or inconsistent input data."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (degenerate system, no consensus, ...)."""
