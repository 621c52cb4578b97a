"""Exception hierarchy shared by all equicomp modules."""


class EquicompError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(EquicompError, ValueError):
    """Input data or parameters violate a precondition."""


class FitError(ValidationError):
    """The number/energy targets cannot be reached by any positive beta."""


class GuardExceeded(EquicompError):
    """A count table would exceed the configured size guard."""


class RegimeWarning(UserWarning):
    """The instance lies outside the asymptotic regime the theory assumes."""
