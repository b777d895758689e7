"""
Error Taxonomy

Every failure the pipeline reports to a user derives from Skel2SenseError.
Each class carries a short category and the process exit code the CLI uses.
"""

from typing import Optional


class Skel2SenseError(Exception):
    """Base class for all user-facing pipeline errors."""

    category = "internal"
    exit_code = 1


# Engine errors (programming mistakes, surfaced as exit 1)

class ShapeError(Skel2SenseError, ValueError):
    """Operand shapes are incompatible with the requested operation."""

    category = "engine"


class GraphError(Skel2SenseError, RuntimeError):
    """Misuse of the differentiation graph (non-scalar loss, reused graph)."""

    category = "engine"


class StatisticsError(Skel2SenseError, ValueError):
    """Not enough elements to compute batch statistics."""

    category = "engine"


class TargetError(Skel2SenseError, ValueError):
    """Class index outside [0, n_classes)."""

    category = "engine"


# Configuration

class ConfigError(Skel2SenseError):
    """Invalid or incomplete experiment configuration."""

    category = "config"
    exit_code = 3


# Data

class DataError(Skel2SenseError):
    """Input data violates a preprocessing or dataset contract."""

    category = "data"
    exit_code = 4


class SchemaError(DataError):
    """A dataset descriptor or manifest is inconsistent with the data."""


class MissingModalityError(DataError):
    """A required pose, accelerometer or label file is absent."""


class AlignmentError(DataError):
    """Pose and sensor streams cannot be aligned within tolerance."""


class DegenerateSkeletonError(DataError):
    """Neck to mid-hip scale collapsed below the usable threshold."""


# Binary formats

class FormatError(Skel2SenseError):
    """A file does not follow its declared binary or text format."""

    category = "format"
    exit_code = 4


class ArrayFormatError(FormatError):
    """Malformed array container."""


class BadMagicError(ArrayFormatError):
    """Magic bytes do not match; offset of the first bad byte is kept."""

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class UnsupportedDtypeError(ArrayFormatError):
    """Array container stores something other than little-endian f4/f8."""


class TruncatedPayloadError(ArrayFormatError):
    """Payload length disagrees with the declared shape."""


class CheckpointError(FormatError):
    """Checkpoint magic, manifest or payload is inconsistent."""


# Numerics

class DivergenceError(Skel2SenseError):
    """Training produced a non-finite loss."""

    category = "divergence"
    exit_code = 5


class SeedRunError(Skel2SenseError):
    """A single seed of a multi-seed run failed."""

    def __init__(self, seed: int, cause: Exception):
        super().__init__(f"seed {seed} failed: {cause}")
        self.seed = seed
        self.cause = cause
        if isinstance(cause, Skel2SenseError):
            self.category = cause.category
            self.exit_code = cause.exit_code
        elif isinstance(cause, OSError):
            self.category = DataError.category
            self.exit_code = DataError.exit_code


def describe(error: Exception) -> Optional[str]:
    """Single-line, machine-parsable rendering used by the CLI."""
    if isinstance(error, Skel2SenseError):
        message = " ".join(str(error).split())
        return f"error[{error.category}]: {message}"
    return None
