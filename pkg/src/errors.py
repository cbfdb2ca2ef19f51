"""
Exception hierarchy shared by every coarse-to-fine module.
"""

from typing import Optional


class C2FError(Exception):
    """Base class for all errors raised by the package."""


class ShapeError(C2FError, ValueError):
    """Operands of a tensor primitive do not conform."""


class NonFiniteError(C2FError, FloatingPointError):
    """A forward value came out NaN or Inf."""


class DataError(C2FError, ValueError):
    """Malformed dataset content."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class VocabularyError(C2FError, ValueError):
    pass


class ConfigError(C2FError, ValueError):
    """Unknown or badly typed configuration key."""


class TrainingError(C2FError, RuntimeError):
    pass


class BenchmarkError(C2FError, RuntimeError):
    pass
