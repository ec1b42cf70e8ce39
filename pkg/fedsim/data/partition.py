"""Federated partitioning of a dataset into client shards."""
import logging
from typing import Dict, List

import numpy as np

from fedsim.data.dataset import ClientDataset, Dataset, Partition
from fedsim.errors import PartitionError

logger = logging.getLogger(__name__)


def shard_sizes(total: int, parts: int) -> List[int]:
    """Equal shard sizes with the remainder spread one per shard from shard 0."""
    base, extra = divmod(total, parts)
    return [base + 1 if i < extra else base for i in range(parts)]


def partition_iid(dataset: Dataset, k: int, seed: int) -> Partition:
    """Shuffle all examples and cut them into ``k`` contiguous shards."""
    total = len(dataset)
    if k < 1:
        raise PartitionError(f"client count must be positive, got {k}")
    if k > total:
        raise PartitionError(f"cannot split {total} examples across {k} clients")
    order = np.random.default_rng(seed).permutation(total)
    clients, start = [], 0
    for client_id, size in enumerate(shard_sizes(total, k)):
        clients.append(ClientDataset(client_id, np.sort(order[start:start + size])))
        start += size
    logger.info(f"IID partition of {total} examples into {k} clients")
    return Partition(dataset, tuple(clients), {"seed": seed, "scheme": "iid", "k": k})


def class_assignment(classes: np.ndarray, k: int, classes_per_client: int, seed: int) -> List[List[int]]:
    """Round-robin of a seeded class order: client k takes ``classes_per_client`` consecutive entries."""
    order = np.random.default_rng(seed).permutation(classes)
    count = len(order)
    return [[int(order[(client * classes_per_client + p) % count]) for p in range(classes_per_client)]
            for client in range(k)]


def partition_label_skew(dataset: Dataset, k: int, classes_per_client: int, seed: int) -> Partition:
    """Give each client shards drawn from at most ``classes_per_client`` labels.

    Every class present in the dataset is cut into as many shards as clients
    assigned to it, so the client index sets cover all examples exactly once.
    """
    present = np.flatnonzero(dataset.label_counts())
    if k < 1:
        raise PartitionError(f"client count must be positive, got {k}")
    if classes_per_client < 1 or classes_per_client > len(present):
        raise PartitionError(
            f"classes_per_client must lie in [1, {len(present)}], got {classes_per_client}"
        )
    if k * classes_per_client < len(present):
        raise PartitionError(
            f"{k} clients x {classes_per_client} classes cannot cover {len(present)} classes"
        )
    assignment = class_assignment(present, k, classes_per_client, seed)
    holders: Dict[int, List[int]] = {int(c): [] for c in present}
    for client_id, classes in enumerate(assignment):
        for label in classes:
            holders[label].append(client_id)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    shards: List[List[np.ndarray]] = [[] for _ in range(k)]
    for label in sorted(holders):
        rows = rng.permutation(np.flatnonzero(dataset.labels == label))
        owners = holders[label]
        if len(rows) < len(owners):
            raise PartitionError(f"class {label} has {len(rows)} examples for {len(owners)} shards")
        start = 0
        for owner, size in zip(owners, shard_sizes(len(rows), len(owners))):
            shards[owner].append(rows[start:start + size])
            start += size

    clients = tuple(ClientDataset(i, np.sort(np.concatenate(parts))) for i, parts in enumerate(shards))
    logger.info(f"Label-skew partition of {len(dataset)} examples into {k} clients, {classes_per_client} classes each")
    return Partition(dataset, clients, {
        "seed": seed, "scheme": "label-skew", "k": k, "classes_per_client": classes_per_client,
    })
