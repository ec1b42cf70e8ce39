"""Named run configurations for the desk-scale algorithm comparisons.

``label-skew-trend`` is the 10-class, 20-client label-skew comparison used for
the rounds-to-milestone trend and the ablation ordering. One UGA server step
stands in for a whole round of FedAvg local steps, so ``lr_global`` is far
larger than the client step.

``overlap-shift`` draws the meta set from a mix of training clients and
clients of a shifted auxiliary population and evaluates on that population.
"""
import copy
from typing import Any, Dict, Mapping

from fedsim.config.run_config import RunConfig, parse_run_config
from fedsim.errors import ConfigError

_SYNTHETIC = {"kind": "synthetic", "classes": 10, "dims": 20, "per_class": 100, "test_per_class": 50,
              "separation": 4.0, "seed": 0}
_LOGREG = {"kind": "logreg", "input_shape": [20], "classes": 10}

EXPERIMENTS: Dict[str, Dict[str, Any]] = {
    "label-skew-trend": {
        "algorithm": "fedmeta_uga",
        "model": _LOGREG,
        "dataset": _SYNTHETIC,
        "partition": {"scheme": "label-skew", "k": 20, "classes_per_client": 2},
        "meta": {"fraction": 0.01},
        "client_fraction": 0.2,
        "local_epochs": 5,
        "batch_size": 16,
        "lr": 0.01,
        "lr_global": 2.0,
        "lr_meta": 0.2,
        "decay": 0.992,
        "rounds": 150,
    },
    "overlap-shift": {
        "algorithm": "fedmeta",
        "model": _LOGREG,
        "dataset": _SYNTHETIC,
        "partition": {"scheme": "label-skew", "k": 20, "classes_per_client": 2},
        "meta": {
            "source": "overlap",
            "overlap_rate": 0.0,
            "source_clients": 8,
            "fraction": 0.1,
            "auxiliary_dataset": {**_SYNTHETIC, "stream": 1, "shift": 6.0},
        },
        "evaluation": {"source": "auxiliary"},
        "client_fraction": 0.2,
        "local_epochs": 5,
        "batch_size": 16,
        "lr": 0.05,
        "lr_meta": 0.5,
        "decay": 0.992,
        "rounds": 60,
    },
}


def merged(base: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Copy of ``base`` with ``overrides`` applied; nested dicts are merged one level deep."""
    result = copy.deepcopy(dict(base))
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = {**result[key], **value}
        else:
            result[key] = value
    return result


def experiment_config(name: str, **overrides) -> RunConfig:
    """Validated config of a named experiment, e.g. ``experiment_config("label-skew-trend", algorithm="uga")``."""
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment preset {name!r}; choose from {sorted(EXPERIMENTS)}")
    return parse_run_config(merged(EXPERIMENTS[name], overrides), source=f"preset {name}")


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Re-validate ``config`` with some keys replaced."""
    return parse_run_config(merged(config.model_dump(mode="json"), overrides))
