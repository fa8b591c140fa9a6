"""Exception hierarchy shared across the package."""


class TailmdeError(Exception):
    """Base class for package-specific errors."""


class DataError(TailmdeError):
    """Malformed or inconsistent input data (files, panels, samples)."""


class NumericError(TailmdeError):
    """Numerical failure: divergent integral, singular matrix, failed fit."""


class DivergenceError(NumericError):
    """An integral over an unbounded interval does not converge."""
