"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class OptimizerFailure(RuntimeError):
    """Optimization could not produce a usable iterate (CLI exit code 3)."""


class QuadratureBudgetError(RuntimeError):
    """Requested sigma-point rule exceeds the configured point budget."""


class NumericalError(RuntimeError):
    """A numerical operation broke down (e.g. non-PD innovation covariance)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index
