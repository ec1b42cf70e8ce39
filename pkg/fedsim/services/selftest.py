"""Embedded oracle suite run by ``fedsim selftest``.

Each check compares an exact derivative path with an independent oracle on a
small tanh network; tanh keeps the finite differences away from ReLU kinks.
"""
import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from fedsim.algorithms.aggregation import aggregate_gradients, aggregate_params
from fedsim.algorithms.client import (
    ClientUpdateResult,
    GradientHook,
    PayloadKind,
    client_update_sgd,
    client_update_uga,
    unrolled_loss,
)
from fedsim.algorithms.objectives import ModelObjective, loss_fn
from fedsim.autodiff.functional import grad, hvp
from fedsim.autodiff.oracles import (
    central_difference_directional,
    central_difference_grad,
    finite_difference_hvp,
    relative_error,
)
from fedsim.data.partition import partition_label_skew
from fedsim.data.synthetic import synth_classification
from fedsim.models.architectures import Architecture
from fedsim.models.network import init_params

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    error: float
    tolerance: float
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28} error={self.error:.3e} tol={self.tolerance:.0e} ({self.seconds:.2f}s)"


class SelfTest:
    """Fixture shared by the checks: a tanh MLP over a small 3-class problem."""

    def __init__(self, seed: int = 0, gradient_hook: Optional[GradientHook] = None):
        self.seed = seed
        self.gradient_hook = gradient_hook
        self.rng = np.random.default_rng(seed)
        self.arch = Architecture(kind="mlp", input_shape=(6,), classes=3, hidden=(5,), activation="tanh")
        self.data = synth_classification(classes=3, dims=6, per_class=8, separation=2.0, seed=seed)
        self.objective = ModelObjective(self.arch, self.data)
        self.params = init_params(self.arch, seed)
        self.all_rows = np.arange(len(self.data))

    def direction(self):
        return self.params.with_values(self.rng.standard_normal(len(self.params)))

    def check_gradient(self) -> float:
        loss_at = loss_fn(self.objective, self.all_rows)
        exact = grad(loss_at, self.params).array
        numeric = central_difference_grad(
            lambda x: self.objective.loss(self.params.with_values(x).values, self.all_rows).item(),
            self.params.array,
        )
        return relative_error(exact, numeric)

    def check_hvp(self) -> float:
        loss_at = loss_fn(self.objective, self.all_rows)
        worst = 0.0
        for _ in range(3):
            v = self.direction()
            worst = max(worst, relative_error(hvp(loss_at, self.params, v).array,
                                              finite_difference_hvp(loss_at, self.params, v).array))
        return worst

    def check_hvp_algebra(self) -> float:
        """Linearity in v and symmetry u.Hv == v.Hu."""
        loss_at = loss_fn(self.objective, self.all_rows)
        u, v = self.direction(), self.direction()
        hu, hv = hvp(loss_at, self.params, u), hvp(loss_at, self.params, v)
        combined = hvp(loss_at, self.params, u * 2.0 + v * -0.5)
        linearity = relative_error(combined.array, (hu * 2.0 + hv * -0.5).array)
        symmetry = abs(u.dot(hv) - v.dot(hu)) / max(abs(u.dot(hv)), 1e-12)
        return max(linearity, symmetry)

    def check_uga_exactness(self) -> float:
        partition = partition_label_skew(self.data, 2, 2, self.seed)
        client = partition.clients[0]
        result = client_update_uga(self.params, client, self.objective, epochs=3, batch_size=4, lr=0.3,
                                   seed=self.seed, gradient_hook=self.gradient_hook)
        worst = 0.0
        for _ in range(5):
            d = self.direction().array
            numeric = central_difference_directional(
                lambda x: unrolled_loss(self.params.with_values(x), self.objective, result.trace, client.indices),
                self.params.array, d,
            )
            exact = float(result.payload.array @ d)
            worst = max(worst, abs(exact - numeric) / max(abs(numeric), abs(exact), 1e-8))
        return worst

    def check_unbiased_one_step(self) -> float:
        """Per-client full-batch gradients, n_k/n weighted, equal the central gradient."""
        partition = partition_label_skew(self.data, 4, 1, self.seed)
        total = partition.total_examples
        mean = np.zeros(len(self.params))
        for client in partition.clients:
            mean += (client.n_k / total) * grad(loss_fn(self.objective, client.indices), self.params).array
        central = grad(loss_fn(self.objective, self.all_rows), self.params).array
        return float(np.max(np.abs(mean - central)))

    def check_fedavg_equivalence(self) -> float:
        """One full-batch local step: parameter averaging equals the gradient-form update."""
        partition = partition_label_skew(self.data, 3, 1, self.seed)
        lr = 0.1
        results = [client_update_sgd(self.params, c, self.objective, epochs=1, batch_size=None, lr=lr, seed=self.seed)
                   for c in partition.clients]
        gradients = [
            ClientUpdateResult(c.client_id, PayloadKind.GRADIENT, grad(loss_fn(self.objective, c.indices), self.params),
                               c.n_k)
            for c in partition.clients
        ]
        averaged = aggregate_params(results).array
        stepped = aggregate_gradients(self.params, gradients, lr).array
        return float(np.max(np.abs(averaged - stepped)))


CHECKS = (
    ("gradient vs central diff", "check_gradient", 1e-6),
    ("hvp vs gradient diff", "check_hvp", 1e-5),
    ("hvp linearity/symmetry", "check_hvp_algebra", 1e-8),
    ("uga exactness", "check_uga_exactness", 1e-5),
    ("one-step unbiasedness", "check_unbiased_one_step", 1e-10),
    ("fedavg equivalence", "check_fedavg_equivalence", 1e-12),
)


def run_selftest(seed: int = 0, gradient_hook: Optional[GradientHook] = None,
                 report: Optional[Callable[[CheckResult], None]] = None) -> List[CheckResult]:
    suite = SelfTest(seed, gradient_hook)
    results = []
    for name, method, tolerance in CHECKS:
        start = time.perf_counter()
        try:
            error = getattr(suite, method)()
        except Exception as e:
            logger.error(f"Error in selftest check {name}: {str(e)}")
            error = float("inf")
        result = CheckResult(name, bool(error <= tolerance), error, tolerance, time.perf_counter() - start)
        results.append(result)
        if report is not None:
            report(result)
    return results
