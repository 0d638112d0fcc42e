"""Error types shared across the package.

Grouped here so the command line tool can map whole categories to exit codes
without importing half the package.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """Campaign or method configuration is malformed or inconsistent."""


class FixtureError(ValueError):
    """A fixture file is missing, malformed, or lacks a requested entry."""


class NumericalError(RuntimeError):
    """Linear algebra or iterative solver failure (non-PD matrix, no convergence)."""
