"""Exception hierarchy shared by all lcx modules."""


class LcxError(Exception):
    """Base class for every error raised by lcx."""


class PreconditionError(LcxError, ValueError):
    """An operation was called with inputs violating its precondition."""


class DomainError(PreconditionError):
    """A point lies outside the box, or a value is infinite where it must be finite."""


class UsageError(LcxError, ValueError):
    """The caller asked for something the API does not support (e.g. a non-node query)."""


class ExtendedArithmeticError(LcxError, ArithmeticError):
    """Raised for the undefined sum (+inf) + (-inf)."""
