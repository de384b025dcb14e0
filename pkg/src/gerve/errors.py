"""Exception hierarchy.

CLI exit codes map onto two families: :class:`InvalidInputError` (exit 1)
and :class:`NumericalFailure` (exit 2).
"""


class GerveError(Exception):
    """Base class for all package errors."""


class InvalidInputError(GerveError, ValueError):
    """Malformed, non-finite or inconsistent user input."""


class DimensionMismatchError(InvalidInputError):
    pass


class NumericalFailure(GerveError, ArithmeticError):
    """A computation produced a non-finite or degenerate result."""


class DegeneratePointError(NumericalFailure):
    """Total mixture density at a point is zero, so responsibilities are undefined."""


class StalledPointError(NumericalFailure):
    """All mean-shift kernel weights underflowed to zero."""


class InsufficientMatchesError(NumericalFailure):
    pass


class DegenerateEllipseError(NumericalFailure):
    pass
