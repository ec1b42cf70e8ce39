"""Exception hierarchy shared by every fedsim module."""
from typing import Optional


class FedSimError(Exception):
    """Base class for all fedsim errors."""


class ShapeError(FedSimError, ValueError):
    """Operand shapes do not fit the operation."""


class NonFiniteError(FedSimError, ArithmeticError):
    """A computation produced NaN or Inf."""


class LabelError(FedSimError, ValueError):
    """A class label is outside [0, classes)."""


class GradientError(FedSimError):
    """backward was asked for something the tape cannot differentiate."""


class LayoutError(FedSimError, ValueError):
    """Two parameter vectors do not share a layout."""


class DatasetError(FedSimError):
    """A dataset could not be built, loaded or sampled."""


class IdxFormatError(DatasetError):
    """An IDX file is malformed."""


class PartitionError(DatasetError):
    """A partition request cannot be satisfied."""


class AggregationError(FedSimError, ValueError):
    """Client results cannot be combined."""


class ConfigError(FedSimError):
    """A run configuration is invalid."""


class RoundError(FedSimError):
    """A failure inside the training loop, tagged with its round."""

    def __init__(self, round_index: int, cause: BaseException):
        self.round_index = round_index
        self.cause = cause
        super().__init__(f"round {round_index}: {type(cause).__name__}: {cause}")


class MetricsFormatError(FedSimError):
    """A metrics CSV could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")
