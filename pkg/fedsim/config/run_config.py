"""Experiment configuration: one JSON document validated with unknown keys rejected."""
import json
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union, get_args

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from fedsim.errors import ConfigError
from fedsim.models.architectures import Architecture

Algorithm = Literal["fedavg", "fedprox", "fedshare", "uga", "fedmeta", "fedmeta_uga"]
ALGORITHMS = get_args(Algorithm)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SeedConfig(StrictModel):
    """Independent streams so data can stay fixed while optimisation randomness varies."""

    partition: int = Field(0, ge=0)
    init: int = Field(0, ge=0)
    training: int = Field(0, ge=0)


class SyntheticDatasetSpec(StrictModel):
    kind: Literal["synthetic"] = "synthetic"
    classes: int = Field(10, ge=2)
    dims: int = Field(20, ge=1)
    per_class: int = Field(100, ge=1)
    test_per_class: int = Field(50, ge=1)
    separation: float = Field(4.0, ge=0.0)
    seed: int = Field(0, ge=0)
    stream: int = Field(0, ge=0)
    shift: float = 0.0


class IdxDatasetSpec(StrictModel):
    kind: Literal["idx"] = "idx"
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    class_count: Optional[int] = Field(None, ge=2)
    limit: Optional[int] = Field(None, ge=1)
    test_limit: Optional[int] = Field(None, ge=1)


DatasetSpec = Annotated[Union[SyntheticDatasetSpec, IdxDatasetSpec], Field(discriminator="kind")]


class PartitionSpec(StrictModel):
    scheme: Literal["iid", "label-skew"] = "iid"
    k: int = Field(10, ge=1)
    classes_per_client: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _skew_needs_classes(self) -> "PartitionSpec":
        if self.scheme == "label-skew" and self.classes_per_client is None:
            raise ValueError("label-skew partitions need classes_per_client")
        return self


class MetaSpec(StrictModel):
    """Server-held sample that doubles as the FedShare share set.

    ``source="sample"`` draws ``fraction`` of the training pool before
    partitioning. ``source="overlap"`` draws it from ``source_clients`` clients,
    ``overlap_rate`` of them training clients and the rest clients of an
    auxiliary partition.
    """

    fraction: float = Field(0.01, gt=0.0, lt=1.0)
    steps: int = Field(1, ge=1)
    source: Literal["sample", "overlap"] = "sample"
    overlap_rate: float = Field(1.0, ge=0.0, le=1.0)
    source_clients: int = Field(8, ge=1)
    auxiliary_dataset: Optional[DatasetSpec] = None
    auxiliary_holdout: float = Field(0.5, gt=0.0, lt=1.0)
    auxiliary_test_fraction: float = Field(0.3, gt=0.0, lt=1.0)
    auxiliary_k: Optional[int] = Field(None, ge=1)


class EvaluationSpec(StrictModel):
    source: Literal["test", "auxiliary"] = "test"
    chunk: int = Field(2048, ge=1)


class RunConfig(StrictModel):
    algorithm: Algorithm
    model: Architecture
    dataset: DatasetSpec = Field(default_factory=SyntheticDatasetSpec)
    partition: PartitionSpec = Field(default_factory=PartitionSpec)
    seeds: SeedConfig = Field(default_factory=SeedConfig)
    meta: MetaSpec = Field(default_factory=MetaSpec)
    evaluation: EvaluationSpec = Field(default_factory=EvaluationSpec)

    client_fraction: float = Field(0.1, gt=0.0, le=1.0)
    local_epochs: int = Field(1, ge=1)
    batch_size: Optional[int] = Field(None, ge=1)
    lr: float = Field(0.01, ge=0.0)
    lr_global: Optional[float] = Field(None, ge=0.0)
    lr_meta: Optional[float] = Field(None, ge=0.0)
    decay: float = Field(1.0, gt=0.0, le=1.0)
    decay_global: bool = True
    decay_meta: bool = True
    linear_scaling: bool = False
    reference_batch: int = Field(64, ge=1)
    prox_mu: float = Field(2e-4, ge=0.0)
    rounds: int = Field(1, ge=1)
    eval_every: int = Field(1, ge=1)

    @field_validator("model", mode="before")
    @classmethod
    def _resolve_preset(cls, value):
        if isinstance(value, str):
            return Architecture.preset(value).model_dump()
        return value

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        if self.algorithm in ("uga", "fedmeta_uga") and self.local_epochs < 2:
            raise ValueError(f"{self.algorithm} needs local_epochs >= 2 (E-1 descent epochs + 1 evaluation epoch)")
        if self.linear_scaling and self.batch_size is None:
            raise ValueError("linear_scaling needs an explicit batch_size")
        if self.evaluation.source == "auxiliary" and self.meta.source != "overlap":
            raise ValueError("evaluation.source=auxiliary needs meta.source=overlap")
        if isinstance(self.dataset, SyntheticDatasetSpec):
            if tuple(self.model.input_shape) != (self.dataset.dims,):
                raise ValueError(
                    f"model input_shape {tuple(self.model.input_shape)} does not match synthetic dims {self.dataset.dims}"
                )
            if self.model.classes < self.dataset.classes:
                raise ValueError(f"model predicts {self.model.classes} classes, dataset has {self.dataset.classes}")
        return self

    @property
    def clients_per_round(self) -> int:
        return max(math.ceil(self.client_fraction * self.partition.k - 1e-9), 1)


def parse_run_config(payload: Union[str, bytes, dict], source: str = "<config>") -> RunConfig:
    """Validate a config document, reporting any problem as ConfigError."""
    try:
        data = json.loads(payload) if isinstance(payload, (str, bytes)) else payload
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}: invalid JSON: {e}") from e
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {e}") from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_run_config(path.read_text(encoding="utf-8"), str(path))
