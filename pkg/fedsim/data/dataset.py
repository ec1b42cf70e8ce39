import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from fedsim.autodiff.tensor import Tensor
from fedsim.errors import DatasetError, PartitionError


def _index_array(values: Sequence[int]) -> np.ndarray:
    array = np.array(values, dtype=np.int64).reshape(-1)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled examples; ``features`` is indexed by example along its first axis."""

    features: Tensor
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        labels = _index_array(self.labels)
        object.__setattr__(self, "labels", labels)
        if self.features.shape[0] != labels.shape[0]:
            raise DatasetError(f"{self.features.shape[0]} feature rows but {labels.shape[0]} labels")
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise DatasetError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def feature_shape(self) -> Tuple[int, ...]:
        return tuple(self.features.shape[1:])

    def subset(self, rows: Sequence[int]) -> "Dataset":
        rows = _index_array(rows)
        if rows.size == 0:
            raise DatasetError("subset would be empty")
        return Dataset(Tensor.wrap(self.features.data[rows]), self.labels[rows], self.class_count)

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    @staticmethod
    def concat(first: "Dataset", second: "Dataset") -> "Dataset":
        if first.feature_shape != second.feature_shape:
            raise DatasetError(f"feature shapes differ: {first.feature_shape} vs {second.feature_shape}")
        return Dataset(
            Tensor.wrap(np.concatenate([first.features.data, second.features.data])),
            np.concatenate([first.labels, second.labels]),
            max(first.class_count, second.class_count),
        )


@dataclass(frozen=True, eq=False)
class ClientDataset:
    """One client's examples: row indices into the partition's parent dataset."""

    client_id: int
    indices: np.ndarray

    def __post_init__(self):
        indices = _index_array(self.indices)
        object.__setattr__(self, "indices", indices)
        if np.unique(indices).size != indices.size:
            raise PartitionError(f"client {self.client_id} holds duplicate indices")

    @property
    def n_k(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True, eq=False)
class Partition:
    dataset: Dataset
    clients: Tuple[ClientDataset, ...]
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "clients", tuple(self.clients))
        total = len(self.dataset)
        for client in self.clients:
            if client.n_k and (client.indices.min() < 0 or client.indices.max() >= total):
                raise PartitionError(f"client {client.client_id} references rows outside [0, {total})")
        ids = [client.client_id for client in self.clients]
        if ids != list(range(len(ids))):
            raise PartitionError("client ids must be 0..K-1 in order")

    def __len__(self) -> int:
        return len(self.clients)

    @property
    def total_examples(self) -> int:
        return sum(client.n_k for client in self.clients)

    def sizes(self) -> Tuple[int, ...]:
        return tuple(client.n_k for client in self.clients)

    def is_disjoint(self) -> bool:
        pooled = np.concatenate([client.indices for client in self.clients])
        return np.unique(pooled).size == pooled.size

    def client_data(self, client_id: int) -> Dataset:
        return self.dataset.subset(self.clients[client_id].indices)

    def manifest(self) -> Dict[str, Any]:
        return {
            "seed": self.provenance.get("seed"),
            "spec": {key: value for key, value in self.provenance.items() if key != "seed"},
            "clients": [[int(i) for i in client.indices] for client in self.clients],
        }


def manifest_bytes(manifest: Dict[str, Any]) -> bytes:
    """Canonical UTF-8 JSON encoding of a manifest."""
    return (json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def content_hash(payload: bytes) -> str:
    """Git blob hash of ``payload``."""
    return hashlib.sha1(b"blob %d\0" % len(payload) + payload).hexdigest()
