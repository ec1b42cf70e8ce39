from fedsim.autodiff.functional import grad, hvp, value_and_grad
from fedsim.autodiff.ops import (
    add,
    add_bias,
    dropout,
    im2col,
    matmul,
    max_pool,
    mul,
    reduce_sum,
    relu,
    reshape,
    scale,
    softmax_cross_entropy,
    sub,
    take_slice,
    tanh,
)
from fedsim.autodiff.tape import Primitive, Tape, Var
from fedsim.autodiff.tensor import Tensor

__all__ = [
    "Primitive", "Tape", "Tensor", "Var",
    "add", "add_bias", "dropout", "grad", "hvp", "im2col", "matmul", "max_pool", "mul",
    "reduce_sum", "relu", "reshape", "scale", "softmax_cross_entropy", "sub", "take_slice",
    "tanh", "value_and_grad",
]
