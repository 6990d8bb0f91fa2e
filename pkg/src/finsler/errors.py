"""Exception hierarchy shared by every module of the package."""


class FinslerError(Exception):
    """Base class for all errors raised by :mod:`finsler`."""


class DomainError(FinslerError, ValueError):
    """Input lies outside the domain where an object is defined.

    Raised e.g. for the zero vector (fundamental tensor undefined on the zero
    section) or for chart points outside a chart.
    """


class PreconditionError(FinslerError, ValueError):
    """A structural hypothesis of an operation does not hold."""


class NumericError(FinslerError, ArithmeticError):
    """A numerical procedure failed (ill-conditioning, non-convergence)."""


class ConfigError(FinslerError, ValueError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
