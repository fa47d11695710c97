"""Exception types shared across the package."""


class XSplatError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(XSplatError, ValueError):
    """An argument violates a documented precondition."""


class NumericalDegeneracyError(XSplatError, ArithmeticError):
    """A matrix stayed singular (or otherwise unusable) after regularization."""


class TooManyPointsError(XSplatError, ValueError):
    """A sampling request would produce more points than the configured cap."""

    def __init__(self, count: int, cap: int):
        super().__init__(f"lattice would contain {count} points, cap is {cap}")
        self.count = count
        self.cap = cap


class StaleSplatsError(XSplatError, RuntimeError):
    """The cloud was mutated between the forward render and the backward pass."""


class TrainingDivergenceError(XSplatError, RuntimeError):
    """A non-finite gradient appeared during optimization."""

    def __init__(self, attribute: str):
        super().__init__(f"non-finite gradient for attribute '{attribute}'")
        self.attribute = attribute


class DatasetError(XSplatError, OSError):
    """A dataset directory is missing files or internally inconsistent."""


class ConfigError(XSplatError, ValueError):
    """A run configuration file failed validation."""
