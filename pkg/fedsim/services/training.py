"""The federated server loop: selection, learning-rate schedule, dispatch, aggregation, evaluation."""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np

from fedsim.algorithms.aggregation import aggregate_gradients, aggregate_params
from fedsim.algorithms.client import (
    ClientUpdateResult,
    GradientHook,
    ProxSpec,
    client_update_sgd,
    client_update_uga,
)
from fedsim.algorithms.fedshare import apply_fedshare
from fedsim.algorithms.meta import meta_loss, meta_update
from fedsim.algorithms.objectives import ModelObjective, Objective
from fedsim.config.run_config import (
    DatasetSpec,
    IdxDatasetSpec,
    PartitionSpec,
    RunConfig,
)
from fedsim.data.dataset import Dataset, Partition, content_hash, manifest_bytes
from fedsim.data.idx import load_idx
from fedsim.data.partition import partition_iid, partition_label_skew
from fedsim.data.sampling import build_overlap_meta, sample_meta_set, split_rows
from fedsim.data.synthetic import synth_classification
from fedsim.errors import RoundError
from fedsim.models.network import Evaluation, evaluate, init_params
from fedsim.models.params import ParamVector
from fedsim.services.metrics import RoundRecord

logger = logging.getLogger(__name__)

Evaluator = Callable[[ParamVector], Evaluation]
RecordCallback = Callable[[RoundRecord], None]


@dataclass(frozen=True)
class AlgorithmPlan:
    client_update: Literal["sgd", "prox", "uga"]
    aggregation: Literal["params", "gradients"]
    meta: bool = False
    share: bool = False


ALGORITHM_PLANS: Dict[str, AlgorithmPlan] = {
    "fedavg": AlgorithmPlan("sgd", "params"),
    "fedprox": AlgorithmPlan("prox", "params"),
    "fedshare": AlgorithmPlan("sgd", "params", share=True),
    "uga": AlgorithmPlan("uga", "gradients"),
    "fedmeta": AlgorithmPlan("sgd", "params", meta=True),
    "fedmeta_uga": AlgorithmPlan("uga", "gradients", meta=True),
}


def select_clients(k: int, fraction: float, rng: np.random.Generator) -> Tuple[int, ...]:
    """Uniform sample without replacement of max(ceil(fraction * k), 1) client ids, sorted."""
    m = min(max(math.ceil(fraction * k - 1e-9), 1), k)
    return tuple(sorted(int(c) for c in rng.choice(k, size=m, replace=False)))


def round_rng(training_seed: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([training_seed, 1, round_index]))


def lr_at(lr0: float, decay: float, t: int) -> float:
    return lr0 * decay ** t


def scaled_lr(lr_base: float, batch_size: int, reference_batch: int = 64) -> float:
    """Linear scaling rule: step size proportional to batch size."""
    return lr_base * batch_size / reference_batch


def derive_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


def load_dataset_splits(spec: DatasetSpec) -> Tuple[Dataset, Dataset]:
    """(train, test) datasets described by a dataset spec."""
    if isinstance(spec, IdxDatasetSpec):
        train = load_idx(spec.train_images, spec.train_labels, spec.limit, spec.class_count)
        test = load_idx(spec.test_images, spec.test_labels, spec.test_limit,
                        spec.class_count or train.class_count)
        return train, test
    shape = dict(classes=spec.classes, dims=spec.dims, separation=spec.separation, seed=spec.seed, shift=spec.shift)
    train = synth_classification(per_class=spec.per_class, stream=2 * spec.stream, **shape)
    test = synth_classification(per_class=spec.test_per_class, stream=2 * spec.stream + 1, **shape)
    return train, test


def make_partition(dataset: Dataset, spec: PartitionSpec, seed: int, k: Optional[int] = None) -> Partition:
    k = spec.k if k is None else k
    if spec.scheme == "iid":
        return partition_iid(dataset, k, seed)
    return partition_label_skew(dataset, k, spec.classes_per_client, seed)


@dataclass
class Experiment:
    """Everything a training run needs once data, partition and meta set are built."""

    config: RunConfig
    partition: Partition
    objective: Objective
    initial_params: ParamVector
    evaluator: Evaluator
    meta_objective: Optional[Objective] = None
    meta_set: Optional[Dataset] = None
    details: Dict[str, object] = field(default_factory=dict)

    @property
    def plan(self) -> AlgorithmPlan:
        return ALGORITHM_PLANS[self.config.algorithm]

    @property
    def partition_hash(self) -> str:
        return content_hash(manifest_bytes(self.partition.manifest()))


def prepare_experiment(config: RunConfig) -> Experiment:
    """Build data, partition, meta set and initial parameters for a run.

    The meta sample is carved out before partitioning and doubles as the
    FedShare share set, so every algorithm trains on the same client data.
    """
    try:
        seed = config.seeds.partition
        train, test = load_dataset_splits(config.dataset)
        eval_set = test
        details: Dict[str, object] = {}
        if config.meta.source == "sample":
            meta_set, pool = sample_meta_set(train, config.meta.fraction, derive_seed(seed, 0))
            partition = make_partition(pool, config.partition, derive_seed(seed, 1))
        else:
            if config.meta.auxiliary_dataset is not None:
                pool = train
                aux_train, aux_test = load_dataset_splits(config.meta.auxiliary_dataset)
            else:
                aux_rows, pool_rows = split_rows(len(train), config.meta.auxiliary_holdout, derive_seed(seed, 2))
                pool, aux_all = train.subset(pool_rows), train.subset(aux_rows)
                test_rows, aux_rows = split_rows(len(aux_all), config.meta.auxiliary_test_fraction,
                                                 derive_seed(seed, 3))
                aux_train, aux_test = aux_all.subset(aux_rows), aux_all.subset(test_rows)
            partition = make_partition(pool, config.partition, derive_seed(seed, 1))
            auxiliary = make_partition(aux_train, config.partition, derive_seed(seed, 4), config.meta.auxiliary_k)
            overlap = build_overlap_meta(partition, auxiliary, config.meta.overlap_rate, config.meta.fraction,
                                         config.meta.source_clients, derive_seed(seed, 5))
            meta_set = overlap.dataset
            details["overlap_primary_clients"] = overlap.primary_clients
            details["overlap_auxiliary_clients"] = overlap.auxiliary_clients
            if config.evaluation.source == "auxiliary":
                eval_set = aux_test

        plan = ALGORITHM_PLANS[config.algorithm]
        if plan.share:
            partition = apply_fedshare(partition, meta_set, derive_seed(seed, 6))

        arch = config.model
        objective = ModelObjective(arch, partition.dataset)
        meta_objective = ModelObjective(arch, meta_set) if plan.meta else None
        evaluator = partial(evaluate, arch=arch, dataset=eval_set, chunk=config.evaluation.chunk)
        logger.info(
            f"Prepared {config.algorithm}: {len(partition)} clients, {partition.total_examples} training examples, "
            f"{len(meta_set)} meta examples, {len(eval_set)} evaluation examples"
        )
        return Experiment(config, partition, objective, init_params(arch, config.seeds.init), evaluator,
                          meta_objective, meta_set, details)
    except Exception as e:
        logger.error(f"Error in prepare_experiment: {str(e)}")
        raise


@dataclass(frozen=True)
class TrainingResult:
    records: List[RoundRecord]
    params: ParamVector


class TrainingService:
    """Runs the round loop of one experiment.

    Client updates inside a round run on a thread pool; their results are
    aggregated in client-id order, so any thread count yields identical records.
    """

    def __init__(self, experiment: Experiment, threads: int = 1, record_wall_time: bool = False,
                 on_record: Optional[RecordCallback] = None, gradient_hook: Optional[GradientHook] = None):
        if threads < 1:
            raise ValueError(f"threads must be at least 1, got {threads}")
        self.experiment = experiment
        self.config = experiment.config
        self.plan = experiment.plan
        self.threads = threads
        self.record_wall_time = record_wall_time
        self.on_record = on_record
        self.gradient_hook = gradient_hook

    def learning_rates(self, t: int) -> Tuple[float, float, float]:
        """(client, global, meta) step sizes for round ``t``."""
        config = self.config
        lr = lr_at(config.lr, config.decay, t)
        if config.linear_scaling:
            lr = scaled_lr(lr, config.batch_size, config.reference_batch)
        lr_global = lr if config.lr_global is None else (
            lr_at(config.lr_global, config.decay, t) if config.decay_global else config.lr_global)
        lr_meta = lr if config.lr_meta is None else (
            lr_at(config.lr_meta, config.decay, t) if config.decay_meta else config.lr_meta)
        return lr, lr_global, lr_meta

    def client_update(self, params: ParamVector, client_id: int, t: int, lr: float) -> ClientUpdateResult:
        config, experiment = self.config, self.experiment
        client = experiment.partition.clients[client_id]
        common = dict(epochs=config.local_epochs, batch_size=config.batch_size, lr=lr,
                      seed=config.seeds.training, round_index=t)
        if self.plan.client_update == "uga":
            return client_update_uga(params, client, experiment.objective, gradient_hook=self.gradient_hook, **common)
        prox = ProxSpec(config.prox_mu) if self.plan.client_update == "prox" else None
        return client_update_sgd(params, client, experiment.objective, prox=prox, **common)

    def run_round(self, t: int, params: ParamVector, executor: Optional[ThreadPoolExecutor] = None
                  ) -> Tuple[ParamVector, RoundRecord]:
        start = time.perf_counter()
        config = self.config
        selected = select_clients(len(self.experiment.partition), config.client_fraction,
                                  round_rng(config.seeds.training, t))
        lr, lr_global, lr_meta = self.learning_rates(t)

        def update(client_id: int) -> ClientUpdateResult:
            return self.client_update(params, client_id, t, lr)

        results = list(executor.map(update, selected)) if executor is not None else [update(c) for c in selected]
        if self.plan.aggregation == "gradients":
            params = aggregate_gradients(params, results, lr_global)
        else:
            params = aggregate_params(results)

        before = after = None
        if self.plan.meta:
            meta = self.experiment.meta_objective
            before = meta_loss(params, meta)
            params = meta_update(params, meta, lr_meta, config.meta.steps)
            after = meta_loss(params, meta)

        accuracy = loss = None
        if (t + 1) % config.eval_every == 0 or t == config.rounds - 1:
            evaluation = self.experiment.evaluator(params)
            accuracy, loss = evaluation.accuracy, evaluation.loss
        wall_ms = int(round((time.perf_counter() - start) * 1000)) if self.record_wall_time else 0
        return params, RoundRecord(t + 1, config.algorithm, selected, accuracy, loss, after, before, wall_ms)

    def run(self) -> TrainingResult:
        params = self.experiment.initial_params
        records: List[RoundRecord] = []
        executor = ThreadPoolExecutor(max_workers=self.threads) if self.threads > 1 else None
        try:
            for t in range(self.config.rounds):
                try:
                    params, record = self.run_round(t, params, executor)
                except Exception as e:
                    logger.error(f"Error in round {t}: {str(e)}")
                    raise RoundError(t, e) from e
                records.append(record)
                if record.evaluated:
                    logger.info(
                        f"Round {record.round}/{self.config.rounds}: accuracy={record.accuracy:.4f} "
                        f"loss={record.loss:.4f} clients={list(record.selected_clients)}"
                    )
                if self.on_record is not None:
                    self.on_record(record)
        finally:
            if executor is not None:
                executor.shutdown()
        return TrainingResult(records, params)


def run_training(config: RunConfig, threads: int = 1, record_wall_time: bool = False,
                 on_record: Optional[RecordCallback] = None) -> List[RoundRecord]:
    experiment = prepare_experiment(config)
    return TrainingService(experiment, threads, record_wall_time, on_record).run().records
