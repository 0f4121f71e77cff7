"""Exception hierarchy shared by every equiwave module."""

from __future__ import annotations


class EquiwaveError(Exception):
    """Base exception for equiwave errors."""
    pass


class InvalidArgumentError(EquiwaveError, ValueError):
    """Raised when an argument violates an operation's precondition."""
    pass


class ResourceLimitError(EquiwaveError):
    """Raised when a request exceeds a configured frequency or size cap."""
    pass


class EmptyWindowError(EquiwaveError):
    """Raised when a spectral window contains no eigenfrequency."""
    pass


class DegenerateWindowError(EquiwaveError):
    """Raised when a statistic needs more modes than the window holds."""
    pass


class NumericFailureError(EquiwaveError):
    """Raised when an iterative method fails to converge."""
    pass


class ConfigError(EquiwaveError):
    """Raised when a run configuration is malformed or out of range."""

    def __init__(self, key: str, constraint: str):
        self.key = key
        self.constraint = constraint
        super().__init__(f"{key}: {constraint}")
