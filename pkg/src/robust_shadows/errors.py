"""Exception types raised across the package."""


class RobustShadowsError(Exception):
    """Base class for package errors."""


class InvalidDimensionError(RobustShadowsError, ValueError):
    pass


class InvalidArgumentError(RobustShadowsError, ValueError):
    pass


class InvalidStateError(RobustShadowsError, ValueError):
    """Matrix fails density-matrix or observable validation."""


class NumericIntegrityError(RobustShadowsError, ArithmeticError):
    pass


class InvalidBudgetError(RobustShadowsError, ValueError):
    """A trimming or corruption budget is outside its legal range."""


class UnsupportedOrderError(RobustShadowsError, ValueError):
    pass


class ConfigurationError(RobustShadowsError, ValueError):
    pass


class UnsupportedMeasurementError(RobustShadowsError, NotImplementedError):
    pass


class SizeOverflowError(RobustShadowsError, OverflowError):
    pass


class InsufficientCopiesError(RobustShadowsError, ValueError):
    pass
