"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid model or solver parameters."""


class DomainError(ValueError):
    """Input outside the mathematical domain of a formula or method."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (decomposition, divergence, lost accuracy)."""
