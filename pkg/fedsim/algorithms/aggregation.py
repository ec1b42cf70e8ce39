"""Server-side combination of client results.

Results are summed in ascending client_id order whatever order they arrive
in, so the aggregate is bitwise independent of scheduling.
"""
from typing import List, Sequence

import numpy as np

from fedsim.algorithms.client import ClientUpdateResult, PayloadKind
from fedsim.errors import AggregationError
from fedsim.models.params import ParamVector


def canonical_order(results: Sequence[ClientUpdateResult], kind: PayloadKind) -> List[ClientUpdateResult]:
    if not results:
        raise AggregationError("no client results to aggregate")
    ordered = sorted(results, key=lambda r: r.client_id)
    ids = [r.client_id for r in ordered]
    if len(set(ids)) != len(ids):
        raise AggregationError(f"duplicate client ids in results: {ids}")
    for result in ordered:
        if result.kind != kind:
            raise AggregationError(f"client {result.client_id} sent {result.kind.value}, expected {kind.value}")
        ordered[0].payload.check_layout(result.payload)
    if sum(r.n_k for r in ordered) <= 0:
        raise AggregationError("client example counts sum to zero")
    return ordered


def weighted_mean(results: Sequence[ClientUpdateResult], kind: PayloadKind) -> ParamVector:
    """sum_k (n_k / n) * payload_k, accumulated in client order."""
    ordered = canonical_order(results, kind)
    total = sum(r.n_k for r in ordered)
    acc = np.zeros(len(ordered[0].payload))
    for result in ordered:
        acc += (result.n_k / total) * result.payload.array
    return ordered[0].payload.with_values(acc)


def aggregate_gradients(params: ParamVector, results: Sequence[ClientUpdateResult], lr_global: float) -> ParamVector:
    """w_{t+1} = w_t - lr_global * weighted mean of client gradients."""
    mean = weighted_mean(results, PayloadKind.GRADIENT)
    params.check_layout(mean)
    return params - mean * lr_global


def aggregate_params(results: Sequence[ClientUpdateResult]) -> ParamVector:
    return weighted_mean(results, PayloadKind.PARAMS)
