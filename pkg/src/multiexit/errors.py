"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: configuration/validation
problems exit 1, computation failures exit 2, and I/O failures exit 3
(plain ``OSError`` covers the last).
"""


class MultiexitError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(MultiexitError, ValueError):
    """Array dimensions do not conform (e.g. matmul operand mismatch)."""


class NumericError(MultiexitError, ArithmeticError):
    """A computation produced or received non-finite values."""


class ConfigError(MultiexitError, ValueError):
    """Invalid configuration value, unknown config key, or bad CLI flag."""


class TrainingError(MultiexitError, RuntimeError):
    """Training diverged or could not proceed."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class SearchError(MultiexitError, RuntimeError):
    """A parameter search (e.g. accuracy lower bound) cannot reach its target."""
