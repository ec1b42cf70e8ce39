from fedsim.config.run_config import (
    ALGORITHMS,
    DatasetSpec,
    EvaluationSpec,
    IdxDatasetSpec,
    MetaSpec,
    PartitionSpec,
    RunConfig,
    SeedConfig,
    SyntheticDatasetSpec,
    load_run_config,
    parse_run_config,
)
from fedsim.config.presets import EXPERIMENTS, experiment_config, with_overrides
from fedsim.config.settings import Settings, settings

__all__ = [
    "ALGORITHMS", "DatasetSpec", "EXPERIMENTS", "EvaluationSpec", "IdxDatasetSpec", "MetaSpec", "PartitionSpec",
    "RunConfig", "SeedConfig", "Settings", "SyntheticDatasetSpec", "experiment_config", "load_run_config",
    "parse_run_config", "settings", "with_overrides",
]
