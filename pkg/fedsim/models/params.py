from dataclasses import dataclass
from typing import Dict, Iterator, Mapping, Sequence, Tuple

import numpy as np

from fedsim.autodiff.tensor import Tensor
from fedsim.errors import LayoutError, ShapeError


@dataclass(frozen=True)
class Layout:
    """Ordered (name, shape) entries describing how a flat vector splits into arrays."""

    entries: Tuple[Tuple[str, Tuple[int, ...]], ...]

    @classmethod
    def of(cls, entries: Sequence[Tuple[str, Sequence[int]]]) -> "Layout":
        normalized = tuple((name, tuple(int(d) for d in shape)) for name, shape in entries)
        names = [name for name, _ in normalized]
        if len(set(names)) != len(names):
            raise LayoutError(f"duplicate names in layout: {names}")
        return cls(normalized)

    @property
    def size(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.entries)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.entries)

    def spans(self) -> Iterator[Tuple[str, int, int, Tuple[int, ...]]]:
        """Yield (name, start, stop, shape) for each entry."""
        offset = 0
        for name, shape in self.entries:
            width = int(np.prod(shape))
            yield name, offset, offset + width, shape
            offset += width

    def span(self, name: str) -> Tuple[int, int, Tuple[int, ...]]:
        for entry, start, stop, shape in self.spans():
            if entry == name:
                return start, stop, shape
        raise KeyError(name)


@dataclass(frozen=True)
class ParamVector:
    """Flattened model parameters with their layout.

    Arithmetic between two vectors requires identical layouts.
    """

    layout: Layout
    values: Tensor

    def __post_init__(self):
        if self.values.ndim != 1 or self.values.size != self.layout.size:
            raise ShapeError(
                f"values of shape {self.values.shape} do not match layout of size {self.layout.size}"
            )

    @classmethod
    def zeros(cls, layout: Layout) -> "ParamVector":
        return cls(layout, Tensor.wrap(np.zeros(layout.size)))

    @classmethod
    def from_arrays(cls, layout: Layout, arrays: Mapping[str, np.ndarray]) -> "ParamVector":
        parts = []
        for name, shape in layout.entries:
            array = np.asarray(arrays[name], dtype=np.float64)
            if array.shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {array.shape}")
            parts.append(array.reshape(-1))
        return cls(layout, Tensor.wrap(np.concatenate(parts)))

    @property
    def array(self) -> np.ndarray:
        return self.values.data

    def unflatten(self) -> Dict[str, np.ndarray]:
        return {name: self.array[start:stop].reshape(shape) for name, start, stop, shape in self.layout.spans()}

    def with_values(self, values) -> "ParamVector":
        tensor = values if isinstance(values, Tensor) else Tensor.wrap(np.asarray(values, dtype=np.float64))
        return ParamVector(self.layout, tensor)

    def check_layout(self, other: "ParamVector") -> None:
        if self.layout != other.layout:
            raise LayoutError("parameter layouts differ")

    def __add__(self, other: "ParamVector") -> "ParamVector":
        self.check_layout(other)
        return self.with_values(self.array + other.array)

    def __sub__(self, other: "ParamVector") -> "ParamVector":
        self.check_layout(other)
        return self.with_values(self.array - other.array)

    def __mul__(self, factor: float) -> "ParamVector":
        return self.with_values(float(factor) * self.array)

    __rmul__ = __mul__

    def dot(self, other: "ParamVector") -> float:
        self.check_layout(other)
        return float(self.array @ other.array)

    def norm(self) -> float:
        return float(np.linalg.norm(self.array))

    def equals(self, other: "ParamVector") -> bool:
        return self.layout == other.layout and self.values.equals(other.values)

    def __len__(self) -> int:
        return self.layout.size
