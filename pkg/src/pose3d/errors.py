"""Exception hierarchy shared across the engine."""


class Pose3dError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(Pose3dError):
    """Tensor shapes are invalid or inconsistent for the requested operation."""


class AxisError(ShapeError):
    """A reduction axis is out of range or duplicated."""


class ConfigError(Pose3dError):
    """A configuration value violates its contract."""


class DataError(Pose3dError):
    """Dataset content is missing, malformed, or unusable (bad boxes, short clips, misaligned frames)."""


class NumericError(Pose3dError):
    """Non-finite values where finite numbers are required."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""


class WeightsError(Pose3dError):
    """Weights file could not be used."""


class WeightsFormatError(WeightsError):
    """Bad magic, unsupported version, or malformed header."""


class WeightsShapeError(WeightsError):
    """Stored tensor shapes disagree with the requested architecture."""


class WeightsTruncatedError(WeightsError):
    """Payload ends before all declared tensors were read."""
