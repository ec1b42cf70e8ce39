import math

import numpy as np
import pytest

from fedsim.autodiff.tensor import Tensor
from fedsim.config.presets import EXPERIMENTS, experiment_config, with_overrides
from fedsim.config.run_config import ALGORITHMS, parse_run_config
from fedsim.data.dataset import ClientDataset, Dataset, Partition
from fedsim.errors import ConfigError, RoundError
from fedsim.models.network import Evaluation
from fedsim.services.report import final_accuracy, rounds_to_milestone
from fedsim.services.training import (
    ALGORITHM_PLANS,
    Experiment,
    TrainingService,
    lr_at,
    prepare_experiment,
    round_rng,
    run_training,
    scaled_lr,
    select_clients,
)


def _config(make_config, **overrides):
    return parse_run_config(make_config(**overrides))


def _rows(records):
    return [record.csv_row() for record in records]


@pytest.mark.parametrize("k, fraction, expected", [(10, 0.1, 1), (10, 0.25, 3), (10, 1.0, 10), (10, 0.001, 1),
                                                   (100, 0.1, 10)])
def test_select_clients_count(k, fraction, expected):
    selected = select_clients(k, fraction, np.random.default_rng(0))
    assert len(selected) == expected
    assert list(selected) == sorted(set(selected))
    assert all(0 <= c < k for c in selected)


def test_select_clients_is_uniform():
    counts = np.zeros(10)
    for t in range(5000):
        for client in select_clients(10, 0.2, round_rng(7, t)):
            counts[client] += 1
    frequencies = counts / 5000
    assert np.all((frequencies >= 0.18) & (frequencies <= 0.22))


def test_selection_depends_only_on_seed_and_round():
    assert select_clients(50, 0.1, round_rng(3, 4)) == select_clients(50, 0.1, round_rng(3, 4))
    assert select_clients(50, 0.1, round_rng(3, 4)) != select_clients(50, 0.1, round_rng(3, 5))


def test_learning_rate_schedule():
    assert lr_at(0.002, 0.992, 0) == 0.002
    assert lr_at(0.002, 0.992, 1) == pytest.approx(0.001984, rel=1e-12)
    assert scaled_lr(0.1, 128) == pytest.approx(0.2)
    assert scaled_lr(0.1, 32, reference_batch=32) == pytest.approx(0.1)


def test_every_algorithm_has_a_plan():
    assert set(ALGORITHM_PLANS) == set(ALGORITHMS)
    assert ALGORITHM_PLANS["uga"].aggregation == "gradients"
    assert ALGORITHM_PLANS["fedmeta_uga"].meta and ALGORITHM_PLANS["fedshare"].share


def test_learning_rates_fall_back_to_client_rate(make_config):
    config = _config(make_config, decay=0.5)
    experiment = prepare_experiment(config)
    assert TrainingService(experiment).learning_rates(2) == (0.05, 0.05, 0.05)
    fixed = prepare_experiment(_config(make_config, decay=0.5, lr_global=1.0, decay_global=False, lr_meta=0.4))
    assert TrainingService(fixed).learning_rates(2) == (0.05, 1.0, 0.1)


def test_quadratic_fedavg_single_round(make_config, two_client_quadratic):
    config = _config(make_config, client_fraction=1.0, local_epochs=1, batch_size=None, lr=0.1, rounds=1)
    placeholder = Dataset(Tensor(np.zeros((2, 1))), [0, 0], 1)
    partition = Partition(placeholder, (ClientDataset(0, [0]), ClientDataset(1, [1])))
    seen = []

    def evaluator(params):
        seen.append(params)
        return Evaluation(accuracy=1.0, loss=two_client_quadratic.loss(params.values, [0, 1]).item())

    experiment = Experiment(config, partition, two_client_quadratic, two_client_quadratic.params([0.0, 0.0]), evaluator)
    result = TrainingService(experiment).run()
    np.testing.assert_allclose(result.params.array, [0.1, 0.025], rtol=1e-14)
    assert result.records[0].selected_clients == (0, 1)
    assert seen[0].equals(result.params)


def test_runs_are_deterministic(make_config):
    config = _config(make_config, algorithm="fedprox")
    assert _rows(run_training(config)) == _rows(run_training(config))


def test_thread_count_does_not_change_results(make_config):
    config = _config(make_config, algorithm="uga", client_fraction=0.5)
    serial = TrainingService(prepare_experiment(config), threads=1).run()
    pooled = TrainingService(prepare_experiment(config), threads=4).run()
    assert _rows(serial.records) == _rows(pooled.records)
    np.testing.assert_array_equal(serial.params.array, pooled.params.array)


def test_fedmeta_uga_with_frozen_meta_step_matches_uga(make_config):
    uga = TrainingService(prepare_experiment(_config(make_config, algorithm="uga"))).run()
    frozen = TrainingService(prepare_experiment(_config(make_config, algorithm="fedmeta_uga", lr_meta=0.0))).run()
    np.testing.assert_array_equal(uga.params.array, frozen.params.array)
    assert [r.accuracy for r in uga.records] == [r.accuracy for r in frozen.records]
    assert all(r.meta_loss == r.meta_loss_before for r in frozen.records)


def test_meta_algorithms_record_meta_loss(make_config):
    records = run_training(_config(make_config, algorithm="fedmeta"))
    assert all(r.meta_loss is not None and r.meta_loss_before is not None for r in records)
    assert all(r.meta_loss is None for r in run_training(_config(make_config)))


def test_fedshare_hands_meta_sample_to_clients(make_config):
    plain = prepare_experiment(_config(make_config))
    shared = prepare_experiment(_config(make_config, algorithm="fedshare"))
    assert shared.partition.total_examples == plain.partition.total_examples + len(shared.meta_set)
    assert len(shared.partition.dataset) == shared.partition.total_examples
    assert shared.partition.is_disjoint()
    assert all(a >= b for a, b in zip(shared.partition.sizes(), plain.partition.sizes()))


def test_partition_is_shared_across_algorithms(make_config):
    hashes = {prepare_experiment(_config(make_config, algorithm=a)).partition_hash
              for a in ("fedavg", "fedprox", "uga", "fedmeta", "fedmeta_uga")}
    assert len(hashes) == 1


def test_overlap_meta_set_records_its_sources(make_config):
    config = _config(make_config, meta={"source": "overlap", "overlap_rate": 0.5, "source_clients": 4,
                                        "fraction": 0.2}, evaluation={"source": "auxiliary"}, rounds=2)
    experiment = prepare_experiment(config)
    assert len(experiment.details["overlap_primary_clients"]) == 2
    assert len(experiment.details["overlap_auxiliary_clients"]) == 2
    records = TrainingService(experiment).run().records
    assert all(r.evaluated for r in records)


def test_evaluation_cadence(make_config):
    records = run_training(_config(make_config, eval_every=2))
    assert [r.round for r in records if r.evaluated] == [2, 4, 5]
    assert [r.round for r in records] == [1, 2, 3, 4, 5]


def test_round_failures_carry_the_round(make_config):
    def broken(gradient):
        raise ArithmeticError("gradient overflow")

    experiment = prepare_experiment(_config(make_config, algorithm="uga"))
    with pytest.raises(RoundError) as info:
        TrainingService(experiment, gradient_hook=broken).run()
    assert info.value.round_index == 0
    assert "gradient overflow" in str(info.value)


@pytest.mark.parametrize("error", [IndexError("row 99"), KeyError("dense0.weight"), TypeError("bad operand")])
def test_any_round_failure_carries_the_round(make_config, error):
    calls = []

    def fails_in_third_round(gradient):
        calls.append(1)
        if len(calls) == 5:
            raise error
        return gradient

    experiment = prepare_experiment(_config(make_config, algorithm="uga"))
    with pytest.raises(RoundError) as info:
        TrainingService(experiment, gradient_hook=fails_in_third_round).run()
    assert info.value.round_index == 2
    assert info.value.cause is error
    assert type(error).__name__ in str(info.value)


def test_records_stream_to_callback(make_config):
    streamed = []
    records = run_training(_config(make_config), on_record=streamed.append)
    assert streamed == records


def test_wall_time_is_zero_unless_requested(make_config):
    assert all(r.wall_ms == 0 for r in run_training(_config(make_config)))


@pytest.mark.parametrize("overrides", [
    {"algorithm": "uga", "local_epochs": 1},
    {"algorithm": "fedavg", "linear_scaling": True, "batch_size": None},
    {"evaluation": {"source": "auxiliary"}},
    {"partition": {"scheme": "label-skew", "classes_per_client": None}},
    {"model": {"kind": "logreg", "input_shape": [6], "classes": 4}},
    {"algorithm": "fedsgd"},
    {"momentum": 0.9},
    {"client_fraction": 0.0},
])
def test_invalid_configs_are_rejected(make_config, overrides):
    with pytest.raises(ConfigError):
        _config(make_config, **overrides)


def test_model_presets_resolve_by_name(make_config):
    config = _config(make_config, model="desk-mlp", dataset={"dims": 784, "per_class": 2, "test_per_class": 1})
    assert config.model.hidden == (128,)
    assert config.clients_per_round == 2


@pytest.mark.slow
def test_fedavg_learns_on_label_skew(make_config):
    records = run_training(_config(make_config, rounds=40, client_fraction=0.5))
    assert records[-1].accuracy > 0.6
    assert records[-1].accuracy > records[0].accuracy


@pytest.mark.slow
@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_every_algorithm_beats_chance(make_config, algorithm):
    records = run_training(_config(make_config, algorithm=algorithm, rounds=30, client_fraction=0.5))
    assert np.mean([r.accuracy for r in records[-5:]]) > 0.4


@pytest.mark.slow
def test_meta_step_lowers_meta_loss(make_config):
    records = run_training(_config(make_config, algorithm="fedmeta", rounds=100, lr=0.05, lr_meta=1e-3,
                                   meta={"fraction": 0.1}))
    assert len(records) == 100
    assert sum(r.meta_loss <= r.meta_loss_before for r in records) >= 99


@pytest.mark.parametrize("name", sorted(EXPERIMENTS))
def test_experiment_presets_validate(name):
    config = experiment_config(name, algorithm="uga", seeds={"training": 4})
    assert config.algorithm == "uga" and config.seeds.training == 4
    assert EXPERIMENTS[name]["algorithm"] != "uga"


def test_trend_preset_matches_the_comparison_setup():
    config = experiment_config("label-skew-trend")
    assert (config.partition.k, config.partition.classes_per_client, config.client_fraction) == (20, 2, 0.2)
    assert (config.local_epochs, config.batch_size, config.rounds, config.meta.fraction) == (5, 16, 150, 0.01)
    assert config.lr_global > config.lr * config.local_epochs


def test_unknown_preset_is_a_config_error():
    with pytest.raises(ConfigError):
        experiment_config("cifar-full")


def test_overrides_are_revalidated(make_config):
    config = _config(make_config)
    assert with_overrides(config, meta={"steps": 3}).meta.steps == 3
    assert with_overrides(config, meta={"steps": 3}).meta.fraction == config.meta.fraction
    with pytest.raises(ConfigError):
        with_overrides(config, algorithm="uga", local_epochs=1)


TREND_SEEDS = range(5)
TREND_ALGORITHMS = ("fedavg", "uga", "fedmeta", "fedmeta_uga")


def _rounds_to_70(records):
    reached = rounds_to_milestone(records, 0.70, window=1)
    return math.inf if reached is None else reached


@pytest.fixture(scope="module")
def trend_runs():
    """Rounds-to-70% and final accuracy per algorithm, one entry per training seed."""
    runs = {}
    for algorithm in TREND_ALGORITHMS:
        results = [run_training(experiment_config("label-skew-trend", algorithm=algorithm, seeds={"training": seed}),
                                threads=4) for seed in TREND_SEEDS]
        runs[algorithm] = ([_rounds_to_70(r) for r in results], [final_accuracy(r) for r in results])
    return runs


@pytest.mark.slow
def test_uga_with_meta_reaches_the_milestone_before_fedavg(trend_runs):
    combined_rounds, combined_final = trend_runs["fedmeta_uga"]
    fedavg_rounds, fedavg_final = trend_runs["fedavg"]
    assert sum(c < f for c, f in zip(combined_rounds, fedavg_rounds)) >= 4
    assert np.median(combined_final) >= np.median(fedavg_final)


@pytest.mark.slow
def test_ablation_ordering_of_rounds_to_milestone(trend_runs):
    rounds = {algorithm: trend_runs[algorithm][0] for algorithm in TREND_ALGORITHMS}
    median = {algorithm: np.median(values) for algorithm, values in rounds.items()}
    assert median["fedmeta_uga"] <= min(median["uga"], median["fedmeta"])
    assert max(median["uga"], median["fedmeta"]) <= median["fedavg"]
    ordered = [combined <= min(uga, meta) and max(uga, meta) <= fedavg
               for fedavg, uga, meta, combined in zip(*(rounds[a] for a in TREND_ALGORITHMS))]
    assert sum(ordered) >= 3


@pytest.mark.slow
def test_meta_set_from_the_evaluated_population_protects_fedmeta():
    drops = {}
    for algorithm in ("fedavg", "fedmeta"):
        drops[algorithm] = []
        for seed in range(3):
            final = {
                rate: final_accuracy(run_training(experiment_config(
                    "overlap-shift", algorithm=algorithm, seeds={"training": seed}, meta={"overlap_rate": rate})))
                for rate in (1.0, 0.0)
            }
            drops[algorithm].append(final[1.0] - final[0.0])
    assert drops["fedavg"] == [0.0, 0.0, 0.0]
    assert np.median(drops["fedmeta"]) < np.median(drops["fedavg"])
