"""Gradient and Hessian-vector-product transforms over flat parameter vectors."""
from typing import TYPE_CHECKING, Callable, Tuple

from fedsim.autodiff.tape import Tape, Var

if TYPE_CHECKING:
    from fedsim.models.params import ParamVector

LossAt = Callable[[Var], Var]


def value_and_grad(loss_at: LossAt, theta: "ParamVector") -> Tuple[float, "ParamVector"]:
    """Evaluate ``loss_at`` at ``theta`` and return the loss with its exact gradient."""
    tape = Tape()
    leaf = tape.leaf(theta.values)
    loss = loss_at(leaf)
    (gradient,) = tape.backward(loss, [leaf])
    return loss.value.item(), theta.with_values(gradient)


def grad(loss_at: LossAt, theta: "ParamVector") -> "ParamVector":
    return value_and_grad(loss_at, theta)[1]


def hvp(loss_at: LossAt, theta: "ParamVector", v: "ParamVector") -> "ParamVector":
    """H(theta) @ v by forward-over-reverse differentiation.

    The leaf carries ``v`` as its tangent, so the reverse sweep produces the
    directional derivative of the gradient along ``v`` alongside the gradient.
    """
    theta.check_layout(v)
    tape = Tape(tangents=True)
    leaf = tape.leaf(theta.values, tangent=v.values)
    loss = loss_at(leaf)
    _, (curvature,) = tape.backward_with_tangents(loss, [leaf])
    return theta.with_values(curvature)
