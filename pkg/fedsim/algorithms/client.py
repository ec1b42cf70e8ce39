"""Client-side local updates: plain or proximal SGD, and UGA keep-trace descent.

Every procedure is a pure function of the incoming parameters, the client's
rows and the seed key, so clients can run in any order or concurrently.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from fedsim.algorithms.objectives import Objective, loss_fn
from fedsim.autodiff.functional import grad, hvp, value_and_grad
from fedsim.data.dataset import ClientDataset
from fedsim.errors import ConfigError, DatasetError
from fedsim.models.params import ParamVector

GradientHook = Callable[[ParamVector], ParamVector]


class PayloadKind(str, Enum):
    PARAMS = "params"
    GRADIENT = "gradient"


@dataclass(frozen=True)
class ProxSpec:
    mu: float

    def __post_init__(self):
        if not self.mu >= 0.0:
            raise ConfigError(f"proximal coefficient must be non-negative, got {self.mu}")


@dataclass(frozen=True, eq=False)
class Batch:
    epoch: int
    rows: np.ndarray
    dropout_seed: int


@dataclass(frozen=True, eq=False)
class TraceStep:
    """One recorded descent step: parameters before it, its batch and step size."""

    params_before: ParamVector
    batch: np.ndarray
    step_lr: float
    dropout_seed: Optional[int] = None

    def __post_init__(self):
        if len(self.batch) == 0:
            raise DatasetError("trace step has an empty batch")


@dataclass(frozen=True, eq=False)
class ClientUpdateResult:
    client_id: int
    kind: PayloadKind
    payload: ParamVector
    n_k: int
    trace: Tuple[TraceStep, ...] = ()
    train_loss: Optional[float] = None


def batch_schedule(client: ClientDataset, epochs: int, batch_size: Optional[int], seed: int,
                   round_index: int = 0) -> List[List[Batch]]:
    """Per-epoch mini-batches over a seeded shuffle of the client's rows.

    Epoch ``e`` is keyed by (seed, round, client, e), so two algorithms that
    share the key walk identical batch sequences. ``batch_size=None`` means
    one full batch per epoch.
    """
    if epochs < 1:
        raise ConfigError(f"local epochs must be at least 1, got {epochs}")
    if batch_size is not None and batch_size < 1:
        raise ConfigError(f"batch size must be positive, got {batch_size}")
    if client.n_k == 0:
        raise DatasetError(f"client {client.client_id} has no examples")
    width = client.n_k if batch_size is None else batch_size
    schedule = []
    for epoch in range(epochs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 2, round_index, client.client_id, epoch]))
        order = client.indices[rng.permutation(client.n_k)]
        batches = []
        for start in range(0, client.n_k, width):
            batches.append(Batch(epoch, order[start:start + width], int(rng.integers(2**63 - 1))))
        schedule.append(batches)
    return schedule


def client_update_sgd(params: ParamVector, client: ClientDataset, objective: Objective, epochs: int,
                      batch_size: Optional[int], lr: float, seed: int, round_index: int = 0,
                      prox: Optional[ProxSpec] = None) -> ClientUpdateResult:
    """Run ``epochs`` of mini-batch SGD and return the final parameters.

    With ``prox`` the step direction is grad + mu * (w - params).
    """
    anchor = params
    current = params
    last_loss = None
    for epoch in batch_schedule(client, epochs, batch_size, seed, round_index):
        for batch in epoch:
            last_loss, gradient = value_and_grad(loss_fn(objective, batch.rows, batch.dropout_seed), current)
            if prox is not None and prox.mu:
                gradient = gradient + (current - anchor) * prox.mu
            current = current - gradient * lr
    return ClientUpdateResult(client.client_id, PayloadKind.PARAMS, current, client.n_k, train_loss=last_loss)


def client_update_uga(params: ParamVector, client: ClientDataset, objective: Objective, epochs: int,
                      batch_size: Optional[int], lr: float, seed: int, round_index: int = 0,
                      gradient_hook: Optional[GradientHook] = None) -> ClientUpdateResult:
    """Gradient of the post-trajectory client loss with respect to ``params``.

    The first ``epochs - 1`` epochs descend while recording a trace. The last
    epoch evaluates the full client loss at the final parameters, and its
    gradient is carried back through every recorded step with
    v <- v - lr * H_i v, H_i being the batch-loss Hessian at that step's
    starting point.

    Args:
        params: Global parameters the round started from.
        client: Rows of ``objective`` owned by this client.
        objective: Loss over the pooled examples.
        epochs: Total local epochs, at least 2.
        batch_size: Mini-batch size, ``None`` for full batch.
        lr: Client step size.
        seed: Training seed shared with the other client procedures.
        round_index: Round the update belongs to.
        gradient_hook: Applied to the returned gradient; lets the self-test inject faults.

    Returns:
        ClientUpdateResult carrying the gradient and the recorded trace.
    """
    if epochs < 2:
        raise ConfigError(f"UGA needs at least 2 local epochs (E-1 descent + 1 evaluation), got {epochs}")
    trace: List[TraceStep] = []
    current = params
    for epoch in batch_schedule(client, epochs - 1, batch_size, seed, round_index):
        for batch in epoch:
            trace.append(TraceStep(current, batch.rows, lr, batch.dropout_seed))
            current = current - grad(loss_fn(objective, batch.rows, batch.dropout_seed), current) * lr

    final_loss, v = value_and_grad(loss_fn(objective, client.indices), current)
    for step in reversed(trace):
        curvature = hvp(loss_fn(objective, step.batch, step.dropout_seed), step.params_before, v)
        v = v - curvature * step.step_lr
    if gradient_hook is not None:
        v = gradient_hook(v)
    return ClientUpdateResult(client.client_id, PayloadKind.GRADIENT, v, client.n_k, tuple(trace), final_loss)


def replay_trace(params: ParamVector, objective: Objective, trace: Sequence[TraceStep]) -> ParamVector:
    """Re-run a recorded trajectory from new starting parameters, same batches and step sizes."""
    current = params
    for step in trace:
        current = current - grad(loss_fn(objective, step.batch, step.dropout_seed), current) * step.step_lr
    return current


def unrolled_loss(params: ParamVector, objective: Objective, trace: Sequence[TraceStep],
                  rows: Sequence[int]) -> float:
    """Loss on ``rows`` after replaying ``trace`` from ``params``: the map UGA differentiates."""
    final = replay_trace(params, objective, trace)
    return objective.loss(final.values, rows).item()
