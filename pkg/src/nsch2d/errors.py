"""Shared exception types."""

from __future__ import annotations


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance.

    Carries the final residual (and iterate where useful) for diagnostics.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""
