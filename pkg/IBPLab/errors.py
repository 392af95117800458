"""
IBPLab Errors Module
Exception hierarchy used across the library. The CLI maps ConfigError to
exit code 2 and everything else to a failed run.
"""

from typing import Optional


class IBPLabError(Exception):
    """Base class for all library errors."""


class ConfigError(IBPLabError):
    """Invalid or unresolvable experiment configuration."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DimensionError(IBPLabError, ValueError):
    """Vector/operator dimensions do not agree."""


class SimulationError(IBPLabError):
    """Non-finite state encountered while stepping a path."""

    def __init__(self, message: str, step: Optional[int] = None, model: str = ""):
        self.step = step
        self.model = model
        where = f" at step {step}" if step is not None else ""
        prefix = f"[{model}] " if model else ""
        super().__init__(f"{prefix}{message}{where}")


class ConstraintError(IBPLabError):
    """A structural constraint ((PH) residuals, eigen-relations) failed."""


class OracleError(IBPLabError):
    """An oracle received input outside its domain (e.g. non-Hurwitz drift)."""


class ReductionError(IBPLabError):
    """Partial buffers handed to the reducer overlap or are malformed."""
