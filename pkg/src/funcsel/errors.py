"""Exception and warning types raised across funcsel.

Each error carries a stable ``kind`` string; the CLI copies it into the
machine-readable error object it emits on failure.
"""

from __future__ import annotations

from typing import ClassVar


class FuncselWarning(UserWarning):
    """Recoverable condition (diverged restart, criterion fallback, ...)."""


class FuncselError(Exception):
    """Base class for every error funcsel raises on purpose."""

    kind: ClassVar[str] = "error"
    exit_code: ClassVar[int] = 1

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "type": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }


class ConfigError(FuncselError, ValueError):
    kind = "invalid-configuration"
    exit_code = 2


class DomainError(FuncselError, ValueError):
    kind = "domain"


class ShapeError(FuncselError, ValueError):
    kind = "shape"


class DataError(FuncselError, ValueError):
    kind = "data"


class ParseError(DataError):
    kind = "parse"


class ConditioningError(FuncselError):
    kind = "conditioning"


class NumericalError(FuncselError):
    kind = "numerical"


class CalibrationError(FuncselError):
    kind = "calibration"


class DivergenceError(FuncselError):
    kind = "divergence"

    def __init__(self, message: str, *, iteration: int, learning_rate: float):
        super().__init__(
            f"{message} (iteration {iteration}, learning rate {learning_rate:g})"
        )
        self.iteration = iteration
        self.learning_rate = learning_rate


class EvidenceTooLargeError(FuncselError):
    kind = "evidence-too-large"

    def __init__(self, dim: int, cap: int):
        super().__init__(
            f"restricted Hessian would be {dim} x {dim}, above the cap of {cap}; "
            f"use the 'val' criterion instead"
        )
        self.dim = dim
        self.cap = cap
