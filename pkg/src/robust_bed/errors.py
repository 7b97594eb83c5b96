"""Exception types raised across the package."""


class RobustBedError(Exception):
    """Base class for domain errors."""


class InvalidArgumentError(RobustBedError, ValueError):
    pass


class LimitUndefinedError(RobustBedError, ValueError):
    """A quantity is only defined as a limit at the requested order (e.g. beta at alpha=1)."""


class DegenerateMixtureError(RobustBedError, ValueError):
    """The geometric mixture of two Beta densities is not normalisable."""


class EstimationFailedError(RobustBedError, ArithmeticError):
    pass


class CapacityError(RobustBedError):
    """Exhaustive enumeration was requested beyond the supported size."""


class InfiniteKLError(RobustBedError, ValueError):
    pass
