import json

import numpy as np
import pytest

from fedsim.algorithms.objectives import ModelObjective, QuadraticObjective
from fedsim.config.presets import merged
from fedsim.data.synthetic import synth_classification
from fedsim.models.architectures import Architecture
from fedsim.models.network import init_params


@pytest.fixture
def tanh_arch():
    return Architecture(kind="mlp", input_shape=(6,), classes=3, hidden=(5,), activation="tanh")


@pytest.fixture
def small_data():
    return synth_classification(classes=3, dims=6, per_class=8, separation=2.0, seed=7)


@pytest.fixture
def small_objective(tanh_arch, small_data):
    return ModelObjective(tanh_arch, small_data)


@pytest.fixture
def small_params(tanh_arch):
    return init_params(tanh_arch, 3)


@pytest.fixture
def two_client_quadratic():
    """Heterogeneous two-client diagonal quadratic, one example per client."""
    return QuadraticObjective(curvature=[[1.0, 2.0], [3.0, 0.5]], center=[[-1.0, 0.5], [1.0, -1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def toy_config(**overrides) -> dict:
    """A few-second synthetic run: 4 classes, 8 clients, logistic regression."""
    config = {
        "algorithm": "fedavg",
        "model": {"kind": "logreg", "input_shape": [5], "classes": 4},
        "dataset": {"kind": "synthetic", "classes": 4, "dims": 5, "per_class": 40, "test_per_class": 20,
                    "separation": 3.0, "seed": 11},
        "partition": {"scheme": "label-skew", "k": 8, "classes_per_client": 2},
        "seeds": {"partition": 1, "init": 2, "training": 3},
        "meta": {"fraction": 0.05},
        "client_fraction": 0.25,
        "local_epochs": 2,
        "batch_size": 8,
        "lr": 0.2,
        "rounds": 5,
    }
    return merged(config, overrides)


@pytest.fixture
def make_config():
    return toy_config


@pytest.fixture
def config_file(tmp_path):
    def write(**overrides):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(toy_config(**overrides)), encoding="utf-8")
        return path
    return write
