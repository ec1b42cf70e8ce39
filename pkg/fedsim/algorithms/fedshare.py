import logging

import numpy as np

from fedsim.data.dataset import ClientDataset, Dataset, Partition
from fedsim.data.partition import shard_sizes
from fedsim.errors import PartitionError

logger = logging.getLogger(__name__)


def apply_fedshare(partition: Partition, share: Dataset, seed: int) -> Partition:
    """Split a shared dataset once, uniformly, across every client.

    Share examples are appended to the parent dataset, so they take rows
    N..N+|share|-1 and each client's indices grow by its slice of them.
    """
    if any(client.n_k == 0 for client in partition.clients):
        raise PartitionError("fedshare needs every client to hold at least one example")
    offset = len(partition.dataset)
    parent = Dataset.concat(partition.dataset, share)
    order = offset + np.random.default_rng(seed).permutation(len(share))
    clients, start = [], 0
    for client, size in zip(partition.clients, shard_sizes(len(share), len(partition))):
        gained = order[start:start + size]
        clients.append(ClientDataset(client.client_id, np.sort(np.concatenate([client.indices, gained]))))
        start += size
    logger.info(f"Shared {len(share)} examples across {len(partition)} clients")
    provenance = dict(partition.provenance, fedshare={"seed": seed, "share_size": len(share)})
    return Partition(parent, tuple(clients), provenance)
