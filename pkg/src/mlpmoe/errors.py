"""Exception types shared across the toolkit."""


class MlpMoeError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(MlpMoeError, ValueError):
    """Tensor dimensions are inconsistent with the requested operation."""


class ArgumentError(MlpMoeError, ValueError):
    """A scalar argument is out of its valid range."""


class NumericError(MlpMoeError):
    """An operation produced NaN or Inf."""


class FormatError(MlpMoeError):
    """A checkpoint container is malformed at the byte level."""


class SchemaError(MlpMoeError):
    """The tensor names in a checkpoint do not form a valid model graph."""
