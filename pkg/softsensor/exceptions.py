"""Exception types raised by the soft-sensor engine."""


class SoftSensorError(Exception):
    """Base class for every error raised by the engine."""


class ShapeError(SoftSensorError, ValueError):
    """Operand shapes or widths are incompatible."""


class NumericOverflowError(SoftSensorError, ArithmeticError):
    """A forward or backward pass produced a non-finite number."""


class GraphError(SoftSensorError, RuntimeError):
    """The differentiation graph was used in an invalid way."""


class NonDeterministicError(GraphError):
    """A loss builder returned different values for identical parameters."""


class DataError(SoftSensorError, ValueError):
    """A dataset could not be ingested, lagged, split or batched."""


class ConfigError(SoftSensorError, ValueError):
    """An experiment configuration is invalid."""


class CheckpointError(SoftSensorError, ValueError):
    """A checkpoint file is corrupt, from another version or inconsistent."""


class TrainingError(SoftSensorError, RuntimeError):
    """Training diverged or cannot proceed."""
