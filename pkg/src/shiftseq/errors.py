"""Shared exception types.

Format-specific parse errors live next to their formats (see
:mod:`shiftseq.data` and :mod:`shiftseq.blocks.checkpoint`).
"""


class ConfigError(ValueError):
    """A configuration value is missing, invalid, or inconsistent."""


class DimensionError(ValueError):
    """Tensor shapes or dtypes do not line up for an operation."""


class UsageError(RuntimeError):
    """An API was called in an unsupported way."""


class EmptyInputError(ValueError):
    """An operation received an input with no frames to act on."""


class TrainingDiverged(RuntimeError):
    """Training produced a nonfinite loss; the message names the step."""
