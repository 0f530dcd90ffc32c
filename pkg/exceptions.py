"""Custom exceptions for MultiWalk."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from validation import ValidationReport


class MultiWalkError(Exception):
    """Base exception for all MultiWalk errors."""

    pass


class ConfigError(MultiWalkError):
    """Errors related to run configuration and RWR parameters."""

    pass


class EdgeListError(MultiWalkError):
    """Errors related to edge-list parsing."""

    def __init__(self, message: str, path: Path | None = None, line_no: int | None = None):
        self.path = path
        self.line_no = line_no
        location = ""
        if path is not None:
            location = f"{path}:{line_no}: " if line_no is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class NetworkValidationError(MultiWalkError):
    """Structural invariant breach in a multilayer network."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("; ".join(report.violations) or "invalid network")


class DimensionError(MultiWalkError):
    """Errors related to sparse matrix and vector shapes."""

    pass


class SeedError(MultiWalkError):
    """Errors related to seed resolution."""

    pass


class RestartError(MultiWalkError):
    """Errors related to the restart distribution."""

    pass


class ConvergenceError(MultiWalkError):
    """Raised when a strict solve does not converge."""

    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class EvaluationError(MultiWalkError):
    """Errors related to evaluation protocols."""

    pass


class ExplorationError(MultiWalkError):
    """Errors related to parameter-space exploration."""

    pass
