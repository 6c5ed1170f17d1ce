"""Exception types shared across the package."""


class BinestError(Exception):
    """Base class for all package errors."""


class DomainError(BinestError, ValueError):
    """A parameter lies outside the domain of the requested operation."""


class UsageError(BinestError, ValueError):
    """Malformed call: wrong arity, bad grid, unknown builtin, invalid config."""


class ResourceError(BinestError, RuntimeError):
    """The request would exceed a hard resource limit (e.g. enumeration size)."""


class NumericError(BinestError, ArithmeticError):
    """A numerical procedure failed.

    ``partial`` carries whatever partial result was available (a quadrature
    estimate, a truncated trajectory) and ``step`` the iteration index at
    which the failure was detected, when meaningful.
    """

    def __init__(self, message, *, partial=None, step=None):
        super().__init__(message)
        self.partial = partial
        self.step = step
