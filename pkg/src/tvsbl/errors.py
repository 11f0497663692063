"""Exception types raised across the package."""


class TvsblError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(TvsblError, ValueError):
    pass


class NumericalRankError(TvsblError, ArithmeticError):
    pass


class InvalidStrategyError(TvsblError, ValueError):
    pass


class TooSmallError(TvsblError, ValueError):
    pass


class InfeasibleError(TvsblError, ValueError):
    pass


class UndefinedMetricError(TvsblError, ValueError):
    """SNR or relative error requested with a zero reference norm."""


class NumericalError(TvsblError, ArithmeticError):
    """Factorization failure or non-finite value inside a solver."""

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = [] if indices is None else list(indices)


class ConfigError(TvsblError, ValueError):
    pass
