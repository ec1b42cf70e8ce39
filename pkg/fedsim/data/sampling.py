"""Meta-set sampling, including meta sets drawn across an overlap of two client pools."""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from fedsim.data.dataset import Dataset, Partition
from fedsim.errors import DatasetError


def round_half_away(value: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def split_rows(total: int, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted (sample, remainder) row indices for a uniform sample of round(fraction * total) rows."""
    if not 0.0 < fraction < 1.0:
        raise DatasetError(f"fraction must lie in (0, 1), got {fraction}")
    size = round_half_away(fraction * total)
    if size == 0:
        raise DatasetError(f"sampling {fraction} of {total} examples would be empty")
    if size >= total:
        raise DatasetError(f"sampling {fraction} of {total} examples leaves no remainder")
    order = np.random.default_rng(seed).permutation(total)
    return np.sort(order[:size]), np.sort(order[size:])


def sample_meta_set(dataset: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    sample, remainder = split_rows(len(dataset), fraction, seed)
    return dataset.subset(sample), dataset.subset(remainder)


@dataclass(frozen=True, eq=False)
class OverlapMeta:
    """A meta set together with where each of its rows came from."""

    dataset: Dataset
    from_primary: np.ndarray
    primary_clients: Tuple[int, ...]
    auxiliary_clients: Tuple[int, ...]


def build_overlap_meta(primary: Partition, auxiliary: Partition, overlap_rate: float, fraction: float,
                       source_clients: int, seed: int) -> OverlapMeta:
    """Sample a meta set from a mix of training clients and auxiliary clients.

    Args:
        primary: The training partition.
        auxiliary: A partition the federation never trains on.
        overlap_rate: Share of the ``source_clients`` taken from ``primary``.
        fraction: Share of the pooled source-client examples kept in the meta set.
        source_clients: Number of clients the meta set is drawn from.
        seed: Fixes client choice and example sampling.

    Returns:
        OverlapMeta with the sampled dataset and the provenance of each row.
    """
    if not 0.0 <= overlap_rate <= 1.0:
        raise DatasetError(f"overlap_rate must lie in [0, 1], got {overlap_rate}")
    if not 0.0 < fraction <= 1.0:
        raise DatasetError(f"fraction must lie in (0, 1], got {fraction}")
    if source_clients < 1:
        raise DatasetError(f"source_clients must be positive, got {source_clients}")
    n_primary = round_half_away(overlap_rate * source_clients)
    n_auxiliary = source_clients - n_primary
    if n_primary > len(primary):
        raise DatasetError(f"need {n_primary} primary clients, partition has {len(primary)}")
    if n_auxiliary > len(auxiliary):
        raise DatasetError(f"need {n_auxiliary} auxiliary clients, partition has {len(auxiliary)}")

    rng = np.random.default_rng(seed)
    chosen_primary = tuple(sorted(int(c) for c in rng.permutation(len(primary))[:n_primary]))
    chosen_auxiliary = tuple(sorted(int(c) for c in rng.permutation(len(auxiliary))[:n_auxiliary]))

    pooled: Optional[Dataset] = None
    origin = []
    for partition, chosen, is_primary in ((primary, chosen_primary, True), (auxiliary, chosen_auxiliary, False)):
        if not chosen:
            continue
        rows = np.concatenate([partition.clients[c].indices for c in chosen])
        part = partition.dataset.subset(rows)
        pooled = part if pooled is None else Dataset.concat(pooled, part)
        origin.append(np.full(len(rows), is_primary))
    origin_flags = np.concatenate(origin)

    size = round_half_away(fraction * len(pooled))
    if size == 0:
        raise DatasetError(f"sampling {fraction} of {len(pooled)} pooled examples would be empty")
    keep = np.sort(rng.permutation(len(pooled))[:size])
    return OverlapMeta(pooled.subset(keep), origin_flags[keep], chosen_primary, chosen_auxiliary)
