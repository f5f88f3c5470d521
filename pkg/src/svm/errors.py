"""Error types raised by solvers, data loaders and the benchmark CLI."""

from __future__ import annotations

from typing import Any


class SvmError(Exception):
    """Marker base for every error this package raises on purpose."""


class InvalidParameterError(SvmError, ValueError):
    pass


class ShapeError(SvmError, ValueError):
    pass


class KernelDomainError(SvmError, ValueError):
    pass


class SampleNotFoundError(SvmError, KeyError):
    def __init__(self, index: int) -> None:
        super().__init__(index)
        self.index = index

    def __str__(self) -> str:
        return f"sample {self.index} is not stored"


class DegeneracyError(SvmError, ArithmeticError):
    pass


class InvariantViolationError(SvmError, RuntimeError):
    pass


class NonConvergenceError(SvmError, RuntimeError):
    """Iteration guard tripped; ``diagnostics`` carries a state dump."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DataFormatError(SvmError, ValueError):
    def __init__(self, message: str, line_number: int | None = None) -> None:
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyDatasetError(SvmError, ValueError):
    pass


class ConfigurationError(SvmError, ValueError):
    pass


class UndefinedMetricError(SvmError, ValueError):
    pass


class UnsupportedVersionError(SvmError, ValueError):
    pass


class CheckpointCorruptError(SvmError, ValueError):
    pass
