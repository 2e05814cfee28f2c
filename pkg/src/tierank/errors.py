class TierankError(Exception):
    """Base class for library errors."""


class DomainError(TierankError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class QuadratureError(TierankError, ArithmeticError):
    """Adaptive quadrature failed to reach its tolerance."""


class DataError(TierankError, ValueError):
    """Malformed or infeasible preference data."""


class ConfigError(TierankError, ValueError):
    """Invalid training or experiment configuration."""


class DivergenceError(TierankError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
