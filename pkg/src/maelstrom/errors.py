"""Exception types shared across the package."""


class MaelstromError(Exception):
    """Base class for all package errors."""


class ConfigError(MaelstromError):
    """Invalid configuration value or malformed config structure."""


class ShapeError(MaelstromError):
    """Operands with incompatible dimensions."""


class InputError(MaelstromError):
    """Bad runtime input: non-finite values, out-of-range class index."""


class UsageError(MaelstromError):
    """API misuse: non-scalar backward root, unknown head id."""


class MetricError(MaelstromError):
    """Metric undefined for the given data, e.g. zero target variance."""


class UnscalableError(MaelstromError):
    """Matrix with zero spectral radius cannot be rescaled."""


class SolverError(MaelstromError):
    """Linear system could not be solved."""


class DivergedError(MaelstromError):
    """Training produced a non-finite loss at ``step``."""

    def __init__(self, step: int, message: str | None = None):
        super().__init__(message or f"non-finite loss at step {step}")
        self.step = step
