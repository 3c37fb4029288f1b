"""
Error hierarchy for the robust conditional GAN toolkit.

Every module raises from this hierarchy so the CLI can map failures onto
its exit-code contract. Input-validation errors also subclass ValueError.
"""

from typing import Any, Optional


class RCGANError(Exception):
    """Base class for all toolkit errors."""


class InvalidProbabilityError(RCGANError, ValueError):
    """A probability lies outside [0, 1]."""


class InvalidSpecError(RCGANError, ValueError):
    """A ChannelSpec, MixtureSpec or config object violates its invariants."""


class InvalidPartitionError(RCGANError, ValueError):
    """Group partition is overlapping or does not cover every class."""


class SingularChannelError(RCGANError, ValueError):
    """Channel is not full-rank (some class has sum_u alpha_ui >= 1)."""


class DomainError(RCGANError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ShapeMismatchError(RCGANError, ValueError):
    """Array shapes or dimensions do not agree."""


class DoubleCorruptionError(RCGANError, ValueError):
    """A channel was applied to an already corrupted dataset."""


class DatasetParseError(RCGANError, ValueError):
    """Malformed dataset file. `line` is 1-based and counts the header."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(RCGANError, ValueError):
    """Config schema violation located by a JSON pointer."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


class TrainingDivergedError(RCGANError):
    """Non-finite loss. Carries the last good checkpoint."""

    def __init__(self, message: str, epoch: int = 0, checkpoint: Optional[Any] = None):
        self.epoch = epoch
        self.checkpoint = checkpoint
        super().__init__(message)
