from fedsim.algorithms.aggregation import aggregate_gradients, aggregate_params
from fedsim.algorithms.client import (
    Batch,
    ClientUpdateResult,
    PayloadKind,
    ProxSpec,
    TraceStep,
    batch_schedule,
    client_update_sgd,
    client_update_uga,
    replay_trace,
    unrolled_loss,
)
from fedsim.algorithms.fedshare import apply_fedshare
from fedsim.algorithms.meta import meta_loss, meta_update
from fedsim.algorithms.objectives import ModelObjective, Objective, QuadraticObjective, loss_fn, loss_value

__all__ = [
    "Batch", "ClientUpdateResult", "ModelObjective", "Objective", "PayloadKind", "ProxSpec",
    "QuadraticObjective", "TraceStep", "aggregate_gradients", "aggregate_params", "apply_fedshare",
    "batch_schedule", "client_update_sgd", "client_update_uga", "loss_fn", "loss_value", "meta_loss",
    "meta_update", "replay_trace", "unrolled_loss",
]
