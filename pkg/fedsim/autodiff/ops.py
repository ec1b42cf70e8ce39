"""Primitive operations.

Each public function accepts ``Var`` handles, ``Tensor`` values, numpy arrays
or Python floats. When any argument is a ``Var`` the op is recorded on that
variable's tape and a ``Var`` is returned; otherwise it is evaluated eagerly
and a ``Tensor`` is returned.
"""
from typing import Any, Sequence, Tuple, Union

import numpy as np

from fedsim.autodiff.tape import Arrays, Primitive, Tape, Var
from fedsim.autodiff.tensor import Tensor
from fedsim.errors import GradientError, LabelError, NonFiniteError, ShapeError

Operand = Union[Var, Tensor, np.ndarray, float]


class LinearPrimitive(Primitive):
    """Ops that are linear in their inputs: the tangent map is the op itself."""

    def jvp(self, xs, dxs, out, saved):
        return self.forward(*dxs)[0]

    def vjp_jvp(self, xs, dxs, out, dout, saved, g, dg):
        return self.vjp(xs, out, saved, dg)


class MaskedPrimitive(Primitive):
    """Piecewise-linear ops whose routing is fixed by the primal; second derivative is zero."""

    def vjp_jvp(self, xs, dxs, out, dout, saved, g, dg):
        return self.vjp(xs, out, saved, dg)


class Add(LinearPrimitive):
    name = "add"

    def forward(self, a, b):
        _same_shape(self.name, a, b)
        return a + b, None

    def vjp(self, xs, out, saved, g):
        return g, g


class Sub(LinearPrimitive):
    name = "sub"

    def forward(self, a, b):
        _same_shape(self.name, a, b)
        return a - b, None

    def vjp(self, xs, out, saved, g):
        return g, -g


class Scale(LinearPrimitive):
    name = "scale"

    def __init__(self, factor: float):
        self.factor = float(factor)

    def forward(self, x):
        return self.factor * x, None

    def vjp(self, xs, out, saved, g):
        return (self.factor * g,)


class AddBias(LinearPrimitive):
    """x[..., n] + b[n], the only broadcast the library supports."""

    name = "add_bias"

    def forward(self, x, b):
        if b.ndim != 1 or x.ndim < 1 or x.shape[-1] != b.shape[0]:
            raise ShapeError(f"add_bias: cannot add bias {b.shape} to {x.shape}")
        return x + b, None

    def vjp(self, xs, out, saved, g):
        width = xs[1].shape[0]
        return g, g.reshape(-1, width).sum(axis=0)


class Sum(LinearPrimitive):
    name = "sum"

    def forward(self, x):
        return np.asarray(np.sum(x)), None

    def vjp(self, xs, out, saved, g):
        return (np.full(xs[0].shape, float(g)),)


class Reshape(LinearPrimitive):
    name = "reshape"

    def __init__(self, shape: Sequence[int]):
        self.shape = tuple(shape)

    def forward(self, x):
        try:
            return x.reshape(self.shape), None
        except ValueError as e:
            raise ShapeError(f"reshape: {x.shape} -> {self.shape}: {e}") from e

    def vjp(self, xs, out, saved, g):
        return (g.reshape(xs[0].shape),)


class Slice(LinearPrimitive):
    """Contiguous window of a flat vector, reshaped."""

    name = "slice"

    def __init__(self, start: int, stop: int, shape: Sequence[int]):
        self.start, self.stop, self.shape = start, stop, tuple(shape)

    def forward(self, x):
        if x.ndim != 1 or self.stop > x.shape[0] or int(np.prod(self.shape)) != self.stop - self.start:
            raise ShapeError(f"slice [{self.start}:{self.stop}] as {self.shape} does not fit {x.shape}")
        return x[self.start:self.stop].reshape(self.shape), None

    def vjp(self, xs, out, saved, g):
        full = np.zeros_like(xs[0])
        full[self.start:self.stop] = g.ravel()
        return (full,)


class Dropout(LinearPrimitive):
    """Multiplication by a fixed, pre-scaled keep mask."""

    name = "dropout"

    def __init__(self, mask: np.ndarray):
        self.mask = mask

    def forward(self, x):
        _same_shape(self.name, x, self.mask)
        return x * self.mask, None

    def vjp(self, xs, out, saved, g):
        return (g * self.mask,)


class Im2Col(LinearPrimitive):
    """NHWC image batch -> (N*Ho*Wo, k*k*C) patch matrix for valid convolution."""

    name = "im2col"

    def __init__(self, kernel: int):
        self.kernel = kernel

    def forward(self, x):
        k = self.kernel
        if x.ndim != 4 or x.shape[1] < k or x.shape[2] < k:
            raise ShapeError(f"im2col: kernel {k} does not fit input {x.shape}")
        n, h, w, c = x.shape
        windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
        cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * (h - k + 1) * (w - k + 1), k * k * c)
        return np.ascontiguousarray(cols), None

    def vjp(self, xs, out, saved, g):
        k = self.kernel
        n, h, w, c = xs[0].shape
        ho, wo = h - k + 1, w - k + 1
        patches = g.reshape(n, ho, wo, k, k, c)
        dx = np.zeros((n, h, w, c))
        for i in range(k):
            for j in range(k):
                dx[:, i:i + ho, j:j + wo, :] += patches[:, :, :, i, j, :]
        return (dx,)


class MatMul(Primitive):
    name = "matmul"

    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: inner extents differ, {a.shape} x {b.shape}")
        return a @ b, None

    def jvp(self, xs, dxs, out, saved):
        a, b = xs
        da, db = dxs
        return da @ b + a @ db

    def vjp(self, xs, out, saved, g):
        a, b = xs
        return g @ b.T, a.T @ g

    def vjp_jvp(self, xs, dxs, out, dout, saved, g, dg):
        a, b = xs
        da, db = dxs
        return dg @ b.T + g @ db.T, da.T @ g + a.T @ dg


class Mul(Primitive):
    name = "mul"

    def forward(self, a, b):
        _same_shape(self.name, a, b)
        return a * b, None

    def jvp(self, xs, dxs, out, saved):
        a, b = xs
        da, db = dxs
        return da * b + a * db

    def vjp(self, xs, out, saved, g):
        a, b = xs
        return g * b, g * a

    def vjp_jvp(self, xs, dxs, out, dout, saved, g, dg):
        a, b = xs
        da, db = dxs
        return dg * b + g * db, dg * a + g * da


class Relu(MaskedPrimitive):
    """max(0, x); the subgradient at 0 is 0 and the second derivative is 0 everywhere."""

    name = "relu"

    def forward(self, x):
        mask = x > 0
        return np.where(mask, x, 0.0), mask

    def jvp(self, xs, dxs, out, saved):
        return np.where(saved, dxs[0], 0.0)

    def vjp(self, xs, out, saved, g):
        return (np.where(saved, g, 0.0),)


class Tanh(Primitive):
    name = "tanh"

    def forward(self, x):
        return np.tanh(x), None

    def jvp(self, xs, dxs, out, saved):
        return (1.0 - out * out) * dxs[0]

    def vjp(self, xs, out, saved, g):
        return ((1.0 - out * out) * g,)

    def vjp_jvp(self, xs, dxs, out, dout, saved, g, dg):
        slope = 1.0 - out * out
        return (slope * dg - 2.0 * out * dout * g,)


class MaxPool(MaskedPrimitive):
    """Non-overlapping size x size max pooling over NHWC; ties route to the first maximum."""

    name = "max_pool"

    def __init__(self, size: int):
        self.size = size

    def _blocks(self, x):
        p = self.size
        if x.ndim != 4 or x.shape[1] < p or x.shape[2] < p:
            raise ShapeError(f"max_pool: window {p} does not fit input {x.shape}")
        n, h, w, c = x.shape
        hp, wp = h // p, w // p
        cropped = x[:, :hp * p, :wp * p, :]
        return cropped.reshape(n, hp, p, wp, p, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, hp, wp, c, p * p)

    def forward(self, x):
        blocks = self._blocks(x)
        arg = np.argmax(blocks, axis=-1)[..., None]
        return np.take_along_axis(blocks, arg, axis=-1)[..., 0], arg

    def jvp(self, xs, dxs, out, saved):
        return np.take_along_axis(self._blocks(dxs[0]), saved, axis=-1)[..., 0]

    def vjp(self, xs, out, saved, g):
        p = self.size
        x = xs[0]
        n, hp, wp, c = g.shape
        routed = np.zeros((n, hp, wp, c, p * p))
        np.put_along_axis(routed, saved, g[..., None], axis=-1)
        spread = routed.reshape(n, hp, wp, c, p, p).transpose(0, 1, 4, 2, 5, 3).reshape(n, hp * p, wp * p, c)
        dx = np.zeros_like(x)
        dx[:, :hp * p, :wp * p, :] = spread
        return (dx,)


class SoftmaxCrossEntropy(Primitive):
    """Mean over the batch of -log softmax(logits)[label], max-subtracted."""

    name = "softmax_cross_entropy"

    def __init__(self, labels: np.ndarray):
        self.labels = np.asarray(labels, dtype=np.int64)

    def _onehot(self, logits):
        onehot = np.zeros_like(logits)
        onehot[np.arange(logits.shape[0]), self.labels] = 1.0
        return onehot

    def forward(self, logits):
        if logits.ndim != 2 or logits.shape[0] != self.labels.shape[0]:
            raise ShapeError(f"softmax_cross_entropy: logits {logits.shape} vs {self.labels.shape[0]} labels")
        classes = logits.shape[1]
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= classes):
            raise LabelError(f"labels must lie in [0, {classes})")
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_norm
        loss = -log_probs[np.arange(logits.shape[0]), self.labels].mean()
        return np.asarray(loss), np.exp(log_probs)

    def jvp(self, xs, dxs, out, saved):
        residual = saved - self._onehot(xs[0])
        return np.asarray(np.sum(residual * dxs[0]) / xs[0].shape[0])

    def vjp(self, xs, out, saved, g):
        residual = saved - self._onehot(xs[0])
        return (float(g) * residual / xs[0].shape[0],)

    def vjp_jvp(self, xs, dxs, out, dout, saved, g, dg):
        batch = xs[0].shape[0]
        probs, dz = saved, dxs[0]
        residual = probs - self._onehot(xs[0])
        dprobs = probs * (dz - np.sum(probs * dz, axis=1, keepdims=True))
        return (float(dg) * residual / batch + float(g) * dprobs / batch,)


def add(a: Operand, b: Operand):
    return _apply(Add(), a, b)


def sub(a: Operand, b: Operand):
    return _apply(Sub(), a, b)


def mul(a: Operand, b: Operand):
    return _apply(Mul(), a, b)


def scale(x: Operand, factor: float):
    return _apply(Scale(factor), x)


def add_bias(x: Operand, bias: Operand):
    return _apply(AddBias(), x, bias)


def reduce_sum(x: Operand):
    return _apply(Sum(), x)


def reshape(x: Operand, shape: Sequence[int]):
    return _apply(Reshape(shape), x)


def take_slice(x: Operand, start: int, stop: int, shape: Sequence[int]):
    return _apply(Slice(start, stop, shape), x)


def matmul(a: Operand, b: Operand):
    return _apply(MatMul(), a, b)


def relu(x: Operand):
    return _apply(Relu(), x)


def tanh(x: Operand):
    return _apply(Tanh(), x)


def im2col(x: Operand, kernel: int):
    return _apply(Im2Col(kernel), x)


def max_pool(x: Operand, size: int = 2):
    return _apply(MaxPool(size), x)


def dropout(x: Operand, rate: float, seed: int):
    """Inverted dropout with a mask fully determined by ``seed``."""
    shape = _shape_of(x)
    keep = np.random.default_rng(seed).random(shape) >= rate
    return _apply(Dropout(keep / (1.0 - rate)), x)


def softmax_cross_entropy(logits: Operand, labels: Sequence[int]):
    return _apply(SoftmaxCrossEntropy(np.asarray(labels)), logits)


def _apply(primitive: Primitive, *args: Operand):
    tapes = {id(arg.tape): arg.tape for arg in args if isinstance(arg, Var)}
    if len(tapes) > 1:
        raise GradientError(f"{primitive.name}: operands come from different tapes")
    if tapes:
        tape: Tape = next(iter(tapes.values()))
        inputs = [arg if isinstance(arg, Var) else tape.constant(_as_array(arg)) for arg in args]
        return tape.apply(primitive, *inputs)
    out, _ = primitive.forward(*(_as_array(arg) for arg in args))
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{primitive.name} produced NaN or Inf")
    return Tensor.wrap(out)


def _as_array(value: Any) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data
    return np.asarray(value, dtype=np.float64)


def _shape_of(value: Operand) -> Tuple[int, ...]:
    return value.shape if isinstance(value, (Var, Tensor)) else np.shape(value)


def _same_shape(name: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes differ, {a.shape} vs {b.shape}")
