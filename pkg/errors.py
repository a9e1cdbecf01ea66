"""
errors.py  ·  Shared exception hierarchy
─────────────────────────────────────────
Every engine raises one of these; cli.run wraps them in SuiteError and cli.main turns them into exit codes.
"""

from __future__ import annotations


class LevyError(Exception):
    """Root of every error raised by the engines."""


class DomainError(LevyError, ValueError):
    """An argument lies outside the domain of the operation (e.g. t ∉ [0,1])."""


class InputError(LevyError, ValueError):
    """Malformed or incomplete input data."""


class TruncationError(LevyError, ValueError):
    """A request reaches past the finite truncation of a basis or chaos."""


class RankError(LevyError, ValueError):
    """Incompatible tensor ranks."""


class OrderError(LevyError, ValueError):
    """A Laplacian order outside the range an operator is defined for."""


class UnsupportedCombinationError(LevyError, TypeError):
    """Two operands whose value types cannot be combined."""


class EvaluationError(LevyError, ArithmeticError):
    """A field evaluation produced non-finite values."""

    def __init__(self, message: str, component: int | None = None):
        super().__init__(message)
        self.component = component


class CapabilityError(LevyError, RuntimeError):
    """A field cannot supply the derivative order an operation needs."""


class BlowUpError(LevyError, ArithmeticError):
    """An integrator state became non-finite."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class CrossCheckError(LevyError, RuntimeError):
    """Two independent methods disagree beyond their predicted error bound."""


class ConfigError(LevyError, ValueError):
    """Invalid experiment configuration, pointing at the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class SuiteError(LevyError, RuntimeError):
    """A module error wrapped with the suite it was raised in."""

    def __init__(self, suite: str, cause: Exception):
        super().__init__(f"[{suite}] {type(cause).__name__}: {cause}")
        self.suite = suite
        self.cause = cause
