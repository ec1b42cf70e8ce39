"""Finite-difference oracles used to verify the exact derivative paths.

Nothing here is used for training; the self-test and the test-suite call these
to check ``backward``, ``hvp`` and the unrolled UGA gradient.
"""
from typing import TYPE_CHECKING, Callable

import numpy as np

from fedsim.autodiff.functional import LossAt, grad

if TYPE_CHECKING:
    from fedsim.models.params import ParamVector

ScalarMap = Callable[[np.ndarray], float]


def central_difference_grad(f: ScalarMap, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Coordinate-wise central differences of a scalar map."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = out.reshape(-1)
    for i in range(x.size):
        step = np.zeros_like(x).reshape(-1)
        step[i] = eps
        step = step.reshape(x.shape)
        flat[i] = (f(x + step) - f(x - step)) / (2.0 * eps)
    return out


def central_difference_directional(f: ScalarMap, x: np.ndarray, direction: np.ndarray,
                                   eps: float = 1e-5) -> float:
    return (f(x + eps * direction) - f(x - eps * direction)) / (2.0 * eps)


def finite_difference_hvp(loss_at: LossAt, theta: "ParamVector", v: "ParamVector",
                          eps: float = 1e-4) -> "ParamVector":
    """(grad f(theta + eps v) - grad f(theta - eps v)) / (2 eps)."""
    theta.check_layout(v)
    ahead = grad(loss_at, theta + v * eps)
    behind = grad(loss_at, theta - v * eps)
    return (ahead - behind) * (1.0 / (2.0 * eps))


def relative_error(estimate: np.ndarray, reference: np.ndarray, floor: float = 1e-12) -> float:
    """||estimate - reference|| / max(||reference||, ||estimate||, floor)."""
    estimate = np.asarray(estimate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    scale = max(float(np.linalg.norm(reference)), float(np.linalg.norm(estimate)), floor)
    return float(np.linalg.norm(estimate - reference)) / scale
