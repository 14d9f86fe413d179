"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data, configuration, or a precondition is invalid."""


class TrainingError(RuntimeError):
    """Training diverged or produced a non-finite quantity."""


class FidelityError(RuntimeError):
    """The cluster assigner failed to reproduce the K-means assignment."""
