"""Recordable computation tape with reverse-mode and forward-over-reverse passes.

A tape is an append-only list of nodes. Leaves hold differentiable inputs,
constants hold data, and op nodes hold a primitive applied to strictly earlier
nodes. When the tape is created with ``tangents=True`` every node also carries
a forward-mode tangent, and the reverse pass then yields both the gradient
and its directional derivative (a Hessian-vector product).
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from fedsim.autodiff.tensor import Tensor
from fedsim.errors import GradientError, NonFiniteError, ShapeError

Arrays = Tuple[np.ndarray, ...]


class Primitive(ABC):
    """A differentiable array operation.

    ``forward`` returns the output and whatever the derivative rules need saved.
    ``vjp_jvp`` is the directional derivative of ``vjp`` when inputs move along
    ``dxs`` and the cotangent moves along ``dg``.
    """

    name = "primitive"

    @abstractmethod
    def forward(self, *xs: np.ndarray) -> Tuple[np.ndarray, Any]:
        ...

    @abstractmethod
    def jvp(self, xs: Arrays, dxs: Arrays, out: np.ndarray, saved: Any) -> np.ndarray:
        ...

    @abstractmethod
    def vjp(self, xs: Arrays, out: np.ndarray, saved: Any, g: np.ndarray) -> Arrays:
        ...

    @abstractmethod
    def vjp_jvp(self, xs: Arrays, dxs: Arrays, out: np.ndarray, dout: np.ndarray,
                saved: Any, g: np.ndarray, dg: np.ndarray) -> Arrays:
        ...


class NodeKind(str, Enum):
    LEAF = "leaf"
    CONSTANT = "constant"
    OP = "op"


@dataclass(frozen=True)
class Node:
    index: int
    kind: NodeKind
    primitive: Optional[Primitive] = None
    inputs: Tuple[int, ...] = ()
    differentiable: bool = False


@dataclass(frozen=True, eq=False)
class Var:
    """Handle to a node on a tape."""

    tape: "Tape"
    index: int

    @property
    def value(self) -> Tensor:
        return Tensor.wrap(self.tape.array(self))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.tape.array(self).shape

    def __add__(self, other):
        from fedsim.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from fedsim.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from fedsim.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from fedsim.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from fedsim.autodiff import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        from fedsim.autodiff import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from fedsim.autodiff import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from fedsim.autodiff import ops
        return ops.matmul(other, self)

    def __repr__(self) -> str:
        return f"Var(index={self.index}, shape={self.shape})"


class Tape:
    def __init__(self, tangents: bool = False):
        self.tangents = tangents
        self._nodes: List[Node] = []
        self._values: List[np.ndarray] = []
        self._saved: List[Any] = []
        self._dots: List[np.ndarray] = []
        self._outputs: List[int] = []

    @property
    def nodes(self) -> Tuple[Node, ...]:
        return tuple(self._nodes)

    @property
    def outputs(self) -> Tuple[int, ...]:
        return tuple(self._outputs)

    @property
    def leaves(self) -> Tuple[Var, ...]:
        return tuple(Var(self, node.index) for node in self._nodes if node.kind is NodeKind.LEAF)

    def __len__(self) -> int:
        return len(self._nodes)

    def array(self, var: Var) -> np.ndarray:
        self._check_owned(var)
        return self._values[var.index]

    def tangent(self, var: Var) -> np.ndarray:
        if not self.tangents:
            raise GradientError("tape was recorded without tangents")
        self._check_owned(var)
        return self._dots[var.index]

    def leaf(self, value: Any, tangent: Any = None) -> Var:
        array = _frozen(value)
        dot = None
        if self.tangents:
            dot = np.zeros_like(array) if tangent is None else _frozen(tangent)
            if dot.shape != array.shape:
                raise ShapeError(f"tangent shape {dot.shape} does not match leaf shape {array.shape}")
        return self._push(Node(len(self._nodes), NodeKind.LEAF, differentiable=True), array, None, dot)

    def constant(self, value: Any) -> Var:
        array = _frozen(value)
        dot = np.zeros_like(array) if self.tangents else None
        return self._push(Node(len(self._nodes), NodeKind.CONSTANT), array, None, dot)

    def apply(self, primitive: Primitive, *inputs: Var) -> Var:
        for var in inputs:
            self._check_owned(var)
        xs = tuple(self._values[var.index] for var in inputs)
        out, saved = primitive.forward(*xs)
        out = _checked(out, primitive)
        dot = None
        if self.tangents:
            dxs = tuple(self._dots[var.index] for var in inputs)
            dot = np.asarray(primitive.jvp(xs, dxs, out, saved), dtype=np.float64)
        node = Node(
            index=len(self._nodes),
            kind=NodeKind.OP,
            primitive=primitive,
            inputs=tuple(var.index for var in inputs),
            differentiable=any(self._nodes[var.index].differentiable for var in inputs),
        )
        return self._push(node, out, saved, dot)

    def mark_output(self, var: Var) -> None:
        self._check_owned(var)
        self._outputs.append(var.index)

    def backward(self, output: Var, wrt: Optional[Sequence[Var]] = None) -> List[Tensor]:
        """Reverse-mode gradients of a scalar ``output`` with respect to ``wrt`` (all leaves by default)."""
        grads, _ = self._reverse(output, wrt, with_tangents=False)
        return [Tensor.wrap(g) for g in grads]

    def backward_with_tangents(self, output: Var, wrt: Optional[Sequence[Var]] = None
                               ) -> Tuple[List[Tensor], List[Tensor]]:
        """Gradients plus their directional derivatives along the recorded leaf tangents."""
        if not self.tangents:
            raise GradientError("tape was recorded without tangents")
        grads, dgrads = self._reverse(output, wrt, with_tangents=True)
        return [Tensor.wrap(g) for g in grads], [Tensor.wrap(d) for d in dgrads]

    def replay(self, leaf_values: Sequence[Any]) -> List[Tensor]:
        """Re-execute the recorded ops from new leaf values and return the marked outputs."""
        leaf_nodes = [node for node in self._nodes if node.kind is NodeKind.LEAF]
        if len(leaf_values) != len(leaf_nodes):
            raise GradientError(f"replay needs {len(leaf_nodes)} leaf values, got {len(leaf_values)}")
        fresh = iter(leaf_values)
        values: List[np.ndarray] = []
        for node, recorded in zip(self._nodes, self._values):
            if node.kind is NodeKind.LEAF:
                value = _frozen(next(fresh))
                if value.shape != recorded.shape:
                    raise ShapeError(f"leaf {node.index} expects shape {recorded.shape}, got {value.shape}")
                values.append(value)
            elif node.kind is NodeKind.CONSTANT:
                values.append(recorded)
            else:
                out, _ = node.primitive.forward(*(values[i] for i in node.inputs))
                values.append(_checked(out, node.primitive))
        targets = self._outputs or [len(self._nodes) - 1]
        return [Tensor.wrap(values[i]) for i in targets]

    def _reverse(self, output: Var, wrt: Optional[Sequence[Var]], with_tangents: bool):
        self._check_owned(output)
        out_value = self._values[output.index]
        if out_value.size != 1:
            raise GradientError(f"backward needs a scalar output, got shape {out_value.shape}")
        targets = list(self.leaves) if wrt is None else list(wrt)
        for var in targets:
            if var.tape is not self or self._nodes[var.index].kind is not NodeKind.LEAF:
                raise GradientError(f"node {var.index} is not a leaf of this tape")

        adjoints: List[Optional[np.ndarray]] = [None] * len(self._nodes)
        dadjoints: List[Optional[np.ndarray]] = [None] * len(self._nodes)
        adjoints[output.index] = np.ones_like(out_value)
        if with_tangents:
            dadjoints[output.index] = np.zeros_like(out_value)

        for index in range(output.index, -1, -1):
            g = adjoints[index]
            node = self._nodes[index]
            if g is None or node.kind is not NodeKind.OP or not node.differentiable:
                continue
            xs = tuple(self._values[i] for i in node.inputs)
            out, saved = self._values[index], self._saved[index]
            grads = node.primitive.vjp(xs, out, saved, g)
            dgrads = None
            if with_tangents:
                dxs = tuple(self._dots[i] for i in node.inputs)
                dgrads = node.primitive.vjp_jvp(xs, dxs, out, self._dots[index], saved, g, dadjoints[index])
            for position, source in enumerate(node.inputs):
                if not self._nodes[source].differentiable:
                    continue
                adjoints[source] = _accumulate(adjoints[source], grads[position])
                if with_tangents:
                    dadjoints[source] = _accumulate(dadjoints[source], dgrads[position])

        grads_out, dgrads_out = [], []
        for var in targets:
            zeros = np.zeros_like(self._values[var.index])
            grads_out.append(zeros if adjoints[var.index] is None else adjoints[var.index])
            if with_tangents:
                dgrads_out.append(zeros if dadjoints[var.index] is None else dadjoints[var.index])
        return grads_out, dgrads_out

    def _push(self, node: Node, value: np.ndarray, saved: Any, dot: Optional[np.ndarray]) -> Var:
        self._nodes.append(node)
        self._values.append(value)
        self._saved.append(saved)
        if self.tangents:
            self._dots.append(dot)
        return Var(self, node.index)

    def _check_owned(self, var: Var) -> None:
        if not isinstance(var, Var) or var.tape is not self or not 0 <= var.index < len(self._nodes):
            raise GradientError("variable does not belong to this tape")


def _frozen(value: Any) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data
    array = np.array(value, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise NonFiniteError("tape input contains NaN or Inf")
    array.setflags(write=False)
    return array


def _checked(out: np.ndarray, primitive: Primitive) -> np.ndarray:
    out = np.asarray(out, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{primitive.name} produced NaN or Inf")
    return out


def _accumulate(current: Optional[np.ndarray], update: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if update is None:
        return current
    return update if current is None else current + update
