"""Error hierarchy and failure records.

Every failure the lab can raise derives from :class:`LabError`. Each class carries
the CLI exit code it maps to, so ``__main__`` translates exceptions in one place:

  0 ok, 1 verification failure, 2 config error, 3 numeric divergence.

Sweeps never abort on a single bad cell; the failure is captured into a
:class:`CellFailure` and written out as a NaN row instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


class LabError(Exception):
    """Root of every error raised by icl_ts_lab."""

    exit_code: int = EXIT_CONFIG


class DimensionError(LabError):
    """Operand shapes do not conform."""


class InvalidBound(LabError):
    """A clipping bound that is not strictly positive."""


class ConvergenceError(LabError):
    """Power iteration did not settle within max_iter.

    ``estimate`` is a safe fallback (Frobenius upper bound), ``last_iterate`` the
    last Rayleigh estimate of the iteration.
    """

    exit_code = EXIT_DIVERGENCE

    def __init__(self, message: str, *, estimate: float, last_iterate: float) -> None:
        super().__init__(message)
        self.estimate = estimate
        self.last_iterate = last_iterate


class LayoutError(LabError):
    """Token layout inconsistent with the requested operation."""


class CapacityError(LabError):
    """Embedding dimension D too small for a construction or encoding."""

    def __init__(self, inequality: str, *, required: int, available: int) -> None:
        super().__init__(f"capacity violated: {inequality} (need D >= {required}, got D = {available})")
        self.inequality = inequality
        self.required = required
        self.available = available


class LagError(LabError):
    """Lag order not smaller than the series length."""


class DivergenceError(LabError):
    """A non-finite value appeared (generation, GD, training)."""

    exit_code = EXIT_DIVERGENCE

    def __init__(self, message: str, *, step: int | None = None, series_index: int | None = None) -> None:
        if series_index is not None:
            message = f"series {series_index}: {message}"
        super().__init__(message)
        self.step = step
        self.series_index = series_index


class InvalidStep(LabError):
    """Non-positive gradient step size."""


class PositivityError(LabError):
    """A joint table with zero entries where strict positivity is required."""


class ConditionError(LabError):
    """A bound's hypothesis (e.g. Dobrushin alpha < 1) does not hold."""


class SizeError(LabError):
    """Input too large for brute-force enumeration or finite differences."""


class ConfigError(LabError):
    """Invalid CLI flags or JSON configuration."""


class VerificationError(LabError):
    """One or more oracle-equivalence checks failed."""

    exit_code = EXIT_VERIFY


class SupportWarning(UserWarning):
    """Conditioning event with zero probability was skipped."""


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(exc, LabError):
        return exc.exit_code
    if isinstance(exc, (ValueError, FileNotFoundError)):
        return EXIT_CONFIG
    return EXIT_VERIFY


@dataclass(slots=True)
class CellFailure:
    """A failed sweep/verification cell with enough context to report it."""

    error_type: str  # exception class name
    message: str
    cell: dict[str, Any] = field(default_factory=dict)
    timestamp: float = field(default_factory=time.time)

    @classmethod
    def from_exception(cls, exc: BaseException, cell: dict[str, Any]) -> CellFailure:
        return cls(error_type=type(exc).__name__, message=str(exc)[:500], cell=dict(cell))

    def summary(self) -> str:
        where = ", ".join(f"{k}={v}" for k, v in self.cell.items())
        return f"[{self.error_type}] {self.message[:100]} ({where})"
