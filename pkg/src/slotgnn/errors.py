"""Exception types shared across the package."""


class SlotGnnError(Exception):
    """Base class for all package errors."""


class DimensionError(SlotGnnError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ParameterError(SlotGnnError, ValueError):
    """An argument is outside its valid range (e.g. dropout rate >= 1)."""


class DataError(SlotGnnError, ValueError):
    """A sample violates a data invariant (e.g. two points in one grid cell)."""


class GenerationError(SlotGnnError, RuntimeError):
    """Scene synthesis could not satisfy its geometric constraints."""


class FormatError(SlotGnnError, ValueError):
    """A binary file is corrupt or truncated; message includes the byte offset."""


class CheckpointError(SlotGnnError, ValueError):
    """A checkpoint is missing a required parameter path or config entry."""


class TrainingError(SlotGnnError, RuntimeError):
    """Training hit a fatal condition (NaN gradient, diverging loss)."""
