from typing import Any, Tuple

import numpy as np

from fedsim.errors import NonFiniteError, ShapeError


class Tensor:
    """Immutable dense float64 array.

    Every extent is positive and every entry finite; a read-only copy of the
    input is taken so later mutation of the source cannot leak in.
    """

    __slots__ = ("_data",)

    def __init__(self, data: Any):
        array = np.array(data, dtype=np.float64)
        _validate(array)
        array.setflags(write=False)
        self._data = array

    @classmethod
    def wrap(cls, array: np.ndarray) -> "Tensor":
        """Adopt a freshly computed array without copying it."""
        array = np.asarray(array, dtype=np.float64)
        _validate(array)
        if array.flags.writeable:
            array.setflags(write=False)
        tensor = cls.__new__(cls)
        tensor._data = array
        return tensor

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    def item(self) -> float:
        if self._data.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self._data.reshape(()))

    def equals(self, other: "Tensor") -> bool:
        """Bitwise equality of shape and contents."""
        return self.shape == other.shape and self._data.tobytes() == other._data.tobytes()

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._data
        return self._data.astype(dtype)

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def _validate(array: np.ndarray) -> None:
    if any(extent <= 0 for extent in array.shape):
        raise ShapeError(f"tensor extents must be positive, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise NonFiniteError("tensor contains NaN or Inf")
