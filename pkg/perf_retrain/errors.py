"""Exception hierarchy.

Invalid input raises a ``ValueError`` subclass so callers that only know the
builtin contract keep working; everything raised by the package also derives
from ``RetrainError``.
"""

from __future__ import annotations


class RetrainError(Exception):
    """Base class of every error raised by perf_retrain."""


class DimensionMismatchError(RetrainError, ValueError):
    """An array does not have the dimension the model or loss expects."""


class NonContractiveError(RetrainError, ValueError):
    """The mean map is not a contraction (or I - mu is singular)."""


class WrongRegimeError(RetrainError, ValueError):
    """The instance lies outside the family an oracle or experiment covers."""


class ScheduleModeMismatchError(RetrainError, ValueError):
    """A schedule, algorithm and simulation mode cannot be combined."""


class UnsupportedLossError(RetrainError, TypeError):
    """Retraining dynamics only have closed-form steps for quadratic losses."""


class ConfigError(RetrainError, ValueError):
    """Invalid or unknown configuration entry."""
