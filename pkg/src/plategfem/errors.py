"""Exception types raised by the package."""


class GfemError(Exception):
    """Base class for all package errors."""


class ConstructionError(GfemError):
    """A patch or reference element could not be built."""


class CapabilityError(GfemError):
    """The requested operation is not supported for this configuration."""


class DataError(GfemError):
    """Problem data violate a precondition (e.g. crossing obstacles)."""


class SingularityError(GfemError):
    """A reduced stiffness matrix failed to factor as SPD."""


class NonconvergenceError(GfemError):
    """The active set iteration did not terminate.

    The last active sets are attached so callers can report them.
    """

    def __init__(self, message, lower_active=None, upper_active=None, level=None):
        super().__init__(message)
        self.lower_active = lower_active
        self.upper_active = upper_active
        self.level = level
