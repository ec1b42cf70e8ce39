import random

import numpy as np
import pytest

from fedsim.algorithms.aggregation import aggregate_gradients, aggregate_params, weighted_mean
from fedsim.algorithms.client import (
    ClientUpdateResult,
    PayloadKind,
    ProxSpec,
    batch_schedule,
    client_update_sgd,
    client_update_uga,
    replay_trace,
    unrolled_loss,
)
from fedsim.algorithms.fedshare import apply_fedshare
from fedsim.algorithms.meta import meta_loss, meta_update
from fedsim.algorithms.objectives import ModelObjective, QuadraticObjective, loss_fn
from fedsim.autodiff.functional import grad
from fedsim.autodiff.oracles import central_difference_directional, central_difference_grad, relative_error
from fedsim.autodiff.tensor import Tensor
from fedsim.data.dataset import ClientDataset, Dataset
from fedsim.data.partition import partition_iid, partition_label_skew
from fedsim.errors import AggregationError, ConfigError, LayoutError, ShapeError
from fedsim.models.architectures import Architecture
from fedsim.models.network import init_params
from fedsim.models.params import Layout, ParamVector


def _everyone(objective) -> ClientDataset:
    return ClientDataset(0, np.arange(objective.rows))


def _result(client_id, values, n_k, kind=PayloadKind.GRADIENT):
    payload = ParamVector.zeros(Layout.of([("w", (len(values),))])).with_values(values)
    return ClientUpdateResult(client_id, kind, payload, n_k)


def test_batch_schedule_covers_rows_each_epoch():
    client = ClientDataset(3, np.arange(10, 20))
    schedule = batch_schedule(client, epochs=2, batch_size=4, seed=0)
    assert len(schedule) == 2
    for epoch in schedule:
        assert [len(b.rows) for b in epoch] == [4, 4, 2]
        assert sorted(np.concatenate([b.rows for b in epoch])) == list(range(10, 20))


def test_batch_schedule_is_keyed_by_seed_and_round():
    client = ClientDataset(0, np.arange(30))
    first = batch_schedule(client, 1, 5, seed=1, round_index=2)[0]
    again = batch_schedule(client, 1, 5, seed=1, round_index=2)[0]
    later = batch_schedule(client, 1, 5, seed=1, round_index=3)[0]
    assert all(np.array_equal(a.rows, b.rows) and a.dropout_seed == b.dropout_seed for a, b in zip(first, again))
    assert not all(np.array_equal(a.rows, b.rows) for a, b in zip(first, later))


def test_batch_schedule_full_batch():
    schedule = batch_schedule(ClientDataset(0, [4, 2, 9]), epochs=3, batch_size=None, seed=0)
    assert [len(epoch) for epoch in schedule] == [1, 1, 1]
    assert sorted(schedule[0][0].rows) == [2, 4, 9]


def test_batch_schedule_rejects_bad_settings():
    client = ClientDataset(0, [0, 1])
    with pytest.raises(ConfigError):
        batch_schedule(client, 0, 1, seed=0)
    with pytest.raises(ConfigError):
        batch_schedule(client, 1, 0, seed=0)


def test_sgd_with_zero_step_keeps_params(small_objective, small_params):
    result = client_update_sgd(small_params, _everyone(small_objective), small_objective, epochs=2,
                               batch_size=5, lr=0.0, seed=0)
    assert result.kind == PayloadKind.PARAMS
    assert result.payload.equals(small_params)
    assert result.n_k == small_objective.rows


def test_sgd_single_full_batch_step_on_quadratic():
    objective = QuadraticObjective([[2.0]], [[1.0]])
    result = client_update_sgd(objective.params([3.0]), _everyone(objective), objective, epochs=1,
                               batch_size=None, lr=0.1, seed=0)
    assert result.payload.array[0] == pytest.approx(2.6, rel=1e-15)


def test_prox_term_shrinks_the_local_move():
    objective = QuadraticObjective([[1.0]], [[5.0]])
    start = objective.params([0.0])
    moves = []
    for mu in (0.0, 1.0, 1e3):
        result = client_update_sgd(start, _everyone(objective), objective, epochs=5, batch_size=None,
                                   lr=1e-4, seed=0, prox=ProxSpec(mu))
        moves.append((result.payload - start).norm())
    assert moves[0] > moves[1] > moves[2] > 0.0


def test_prox_rejects_negative_coefficient():
    with pytest.raises(ConfigError):
        ProxSpec(-1.0)


@pytest.mark.parametrize("epochs", [2, 3])
def test_uga_on_scalar_quadratic_matches_closed_form(epochs):
    a, lr, w0 = 2.0, 0.1, 3.0
    objective = QuadraticObjective([[a]], [[0.0]])
    result = client_update_uga(objective.params([w0]), _everyone(objective), objective, epochs=epochs,
                               batch_size=None, lr=lr, seed=0)
    assert result.kind == PayloadKind.GRADIENT
    assert len(result.trace) == epochs - 1
    expected = a * (1 - lr * a) ** (2 * (epochs - 1)) * w0
    assert result.payload.array[0] == pytest.approx(expected, rel=1e-13)


def test_uga_at_stationary_point_returns_zero():
    objective = QuadraticObjective([[1.0, 4.0]], [[0.5, -2.0]])
    result = client_update_uga(objective.params([0.5, -2.0]), _everyone(objective), objective, epochs=3,
                               batch_size=None, lr=0.1, seed=0)
    np.testing.assert_array_equal(result.payload.array, [0.0, 0.0])


def test_uga_needs_two_epochs(small_objective, small_params):
    with pytest.raises(ConfigError):
        client_update_uga(small_params, _everyone(small_objective), small_objective, epochs=1,
                          batch_size=None, lr=0.1, seed=0)


def test_uga_equals_gradient_of_unrolled_map(rng):
    arch = Architecture(kind="mlp", input_shape=(20,), classes=4, hidden=(16,), activation="tanh")
    data = Dataset(Tensor(rng.standard_normal((32, 20))), rng.integers(0, 4, 32), 4)
    objective = ModelObjective(arch, data)
    client = _everyone(objective)
    params = init_params(arch, 1)
    result = client_update_uga(params, client, objective, epochs=3, batch_size=8, lr=0.3, seed=5)
    assert len(result.trace) == 8

    def unrolled(x):
        return unrolled_loss(params.with_values(x), objective, result.trace, client.indices)

    for _ in range(5):
        d = rng.standard_normal(len(params))
        numeric = central_difference_directional(unrolled, params.array, d, eps=1e-6)
        assert abs(result.payload.array @ d - numeric) <= 1e-5 * max(1.0, abs(numeric))


def test_replayed_trace_matches_plain_sgd(small_objective, small_params):
    client = _everyone(small_objective)
    uga = client_update_uga(small_params, client, small_objective, epochs=3, batch_size=6, lr=0.2, seed=4,
                            round_index=1)
    sgd = client_update_sgd(small_params, client, small_objective, epochs=2, batch_size=6, lr=0.2, seed=4,
                            round_index=1)
    np.testing.assert_array_equal(replay_trace(small_params, small_objective, uga.trace).array, sgd.payload.array)


def test_uga_applies_gradient_hook(small_objective, small_params):
    client = _everyone(small_objective)
    plain = client_update_uga(small_params, client, small_objective, 2, None, 0.1, seed=0)
    hooked = client_update_uga(small_params, client, small_objective, 2, None, 0.1, seed=0,
                               gradient_hook=lambda g: g * -1.0)
    np.testing.assert_array_equal(hooked.payload.array, -plain.payload.array)


def test_weighted_mean_weights_by_example_count():
    mean = weighted_mean([_result(0, [1.0, 2.0], 1), _result(1, [3.0, 4.0], 3)], PayloadKind.GRADIENT)
    np.testing.assert_allclose(mean.array, [2.5, 3.5], rtol=1e-15)


def test_aggregate_gradients_steps_against_mean():
    params = ParamVector.zeros(Layout.of([("w", (2,))]))
    new = aggregate_gradients(params, [_result(1, [3.0, 4.0], 3), _result(0, [1.0, 2.0], 1)], 2.0)
    np.testing.assert_allclose(new.array, [-5.0, -7.0], rtol=1e-15)


def test_aggregation_rejects_bad_inputs():
    with pytest.raises(AggregationError):
        aggregate_params([])
    with pytest.raises(AggregationError):
        aggregate_params([_result(0, [1.0], 1, PayloadKind.PARAMS), _result(0, [2.0], 1, PayloadKind.PARAMS)])
    with pytest.raises(AggregationError):
        aggregate_params([_result(0, [1.0], 1, PayloadKind.PARAMS), _result(1, [2.0], 1)])
    with pytest.raises(AggregationError):
        aggregate_params([_result(0, [1.0], 0, PayloadKind.PARAMS)])
    with pytest.raises(LayoutError):
        aggregate_params([_result(0, [1.0], 1, PayloadKind.PARAMS), _result(1, [1.0, 2.0], 1, PayloadKind.PARAMS)])


def test_aggregation_is_bitwise_order_independent(rng):
    results = [_result(k, rng.standard_normal(50), int(rng.integers(1, 100)), PayloadKind.PARAMS)
               for k in range(12)]
    reference = aggregate_params(results).array
    shuffler = random.Random(0)
    for _ in range(5):
        shuffled = list(results)
        shuffler.shuffle(shuffled)
        np.testing.assert_array_equal(aggregate_params(shuffled).array, reference)


@pytest.fixture
def five_clients(small_data, tanh_arch):
    partition = partition_label_skew(small_data, 5, 1, seed=2)
    return partition, ModelObjective(tanh_arch, small_data)


def test_one_step_client_gradients_are_unbiased(five_clients, small_params):
    partition, objective = five_clients
    results = [ClientUpdateResult(c.client_id, PayloadKind.GRADIENT, grad(loss_fn(objective, c.indices), small_params),
                                  c.n_k) for c in partition.clients]
    central = grad(loss_fn(objective, np.arange(objective.rows)), small_params)
    assert np.max(np.abs(weighted_mean(results, PayloadKind.GRADIENT).array - central.array)) <= 1e-10


def test_fedavg_equals_gradient_form_for_one_step(five_clients, small_params):
    partition, objective = five_clients
    lr = 0.3
    param_results = [client_update_sgd(small_params, c, objective, 1, None, lr, seed=0) for c in partition.clients]
    grad_results = [ClientUpdateResult(c.client_id, PayloadKind.GRADIENT, grad(loss_fn(objective, c.indices), small_params),
                                       c.n_k) for c in partition.clients]
    averaged = aggregate_params(param_results).array
    stepped = aggregate_gradients(small_params, grad_results, lr).array
    assert np.max(np.abs(averaged - stepped)) <= 1e-12


def test_fedavg_bias_grows_with_local_steps_while_uga_stays_exact(two_client_quadratic):
    objective = two_client_quadratic
    clients = [ClientDataset(0, [0]), ClientDataset(1, [1])]
    start, lr = objective.params([0.0, 0.0]), 0.05
    biases = []
    for steps in (1, 2, 4, 8):
        local = [client_update_sgd(start, c, objective, steps, None, lr, seed=0) for c in clients]
        fedavg_direction = (start - aggregate_params(local)) * (1.0 / lr)
        central = client_update_sgd(start, _everyone(objective), objective, steps, None, lr, seed=0)
        central_direction = (start - central.payload) * (1.0 / lr)
        biases.append((fedavg_direction - central_direction).norm())

        for client in clients:
            uga = client_update_uga(start, client, objective, steps + 1, None, lr, seed=0)
            oracle = central_difference_grad(
                lambda x: unrolled_loss(start.with_values(x), objective, uga.trace, client.indices), start.array)
            assert relative_error(uga.payload.array, oracle) <= 1e-8
    assert biases[0] <= 1e-12
    assert all(later >= earlier for earlier, later in zip(biases, biases[1:]))
    assert biases[-1] > 5 * biases[1]


def test_meta_update_with_zero_step_is_identity(small_objective, small_params):
    assert meta_update(small_params, small_objective, 0.0).equals(small_params)


def test_meta_update_on_scalar_quadratic():
    objective = QuadraticObjective([[1.0]], [[1.0]])
    assert meta_update(objective.params([3.0]), objective, 0.5).array[0] == 2.0
    assert meta_update(objective.params([3.0]), objective, 0.5, steps=2).array[0] == 1.5


def test_meta_update_descends_meta_loss(small_objective, small_params):
    before = meta_loss(small_params, small_objective)
    assert meta_loss(meta_update(small_params, small_objective, 0.05), small_objective) < before


def test_meta_update_needs_a_step(small_objective, small_params):
    with pytest.raises(ConfigError):
        meta_update(small_params, small_objective, 0.1, steps=0)


def _rows_dataset(values) -> Dataset:
    values = np.asarray(values, dtype=float)
    return Dataset(Tensor(values.reshape(-1, 1)), np.zeros(len(values), dtype=int), 1)


def test_fedshare_spreads_share_over_every_client():
    partition = partition_iid(_rows_dataset(np.arange(20)), 4, seed=0)
    shared = apply_fedshare(partition, _rows_dataset(np.arange(100, 106)), seed=1)
    assert len(shared.dataset) == 26
    assert shared.total_examples == 26
    assert shared.is_disjoint()
    for before, after in zip(partition.clients, shared.clients):
        assert set(before.indices) <= set(after.indices)
        assert all(i >= 20 for i in set(after.indices) - set(before.indices))
    assert [a - b for a, b in zip(shared.sizes(), partition.sizes())] == [2, 2, 1, 1]
    assert shared.provenance["fedshare"] == {"seed": 1, "share_size": 6}
    again = apply_fedshare(partition, _rows_dataset(np.arange(100, 106)), seed=1)
    assert again.manifest() == shared.manifest()


def test_model_objective_checks_shapes(tanh_arch):
    wrong = Dataset(Tensor(np.zeros((3, 4))), [0, 1, 2], 3)
    with pytest.raises(ShapeError):
        ModelObjective(tanh_arch, wrong)
