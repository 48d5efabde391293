"""Exception hierarchy shared by all modules."""


class MorphosimError(Exception):
    """Base class for every error raised by the package."""


class InvalidResolutionError(MorphosimError, ValueError):
    pass


class InvalidGeometryError(MorphosimError, ValueError):
    pass


class OutOfDomainError(MorphosimError, ValueError):
    pass


class AssemblyError(MorphosimError, IndexError):
    pass


class NotSPDError(MorphosimError, ArithmeticError):
    pass


class SingularSystemError(MorphosimError, ArithmeticError):
    pass


class InvalidDensityError(MorphosimError, ValueError):
    pass


class StepTooLargeError(MorphosimError):
    """The requested time step violates the CFL-type bound; retry with dt/2."""


class InversionError(StepTooLargeError):
    """An element inverted (or the boundary self-intersected) after advection."""


class BreakdownError(MorphosimError):
    """The trajectory cannot be continued; ``reason`` uses the breakdown taxonomy."""

    def __init__(self, message, reason="mesh-degeneracy", diagnostics=None):
        super().__init__(message)
        self.reason = reason
        self.diagnostics = diagnostics or {}


class ConfigError(MorphosimError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class UsageError(MorphosimError, ValueError):
    pass


class UnsupportedCaseError(UsageError):
    """The configuration has no reference solution to converge against."""
