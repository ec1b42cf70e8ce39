"""Forward passes, initialisation and evaluation for the supported architectures."""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from fedsim.autodiff import ops
from fedsim.autodiff.tape import Tape, Var
from fedsim.autodiff.tensor import Tensor
from fedsim.errors import DatasetError, ShapeError
from fedsim.models.architectures import Architecture
from fedsim.models.params import ParamVector

Theta = Union[Var, Tensor]


@dataclass(frozen=True)
class Evaluation:
    accuracy: float
    loss: float


def init_params(arch: Architecture, seed: int) -> ParamVector:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    rng = np.random.default_rng(seed)
    layout = arch.layout()
    arrays = {}
    for name, shape in layout.entries:
        if name.endswith(".bias"):
            arrays[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return ParamVector.from_arrays(layout, arrays)


def logits(theta: Theta, arch: Architecture, features: np.ndarray, dropout_seed: Optional[int] = None):
    """Class scores for a feature batch; traced when ``theta`` is a tape variable."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim < 2 or tuple(features.shape[1:]) != tuple(arch.input_shape):
        raise ShapeError(f"features of shape {features.shape} do not match input shape {arch.input_shape}")
    batch = features.shape[0]
    params = {name: ops.take_slice(theta, start, stop, shape) for name, start, stop, shape in arch.layout().spans()}
    activate = ops.relu if arch.activation == "relu" else ops.tanh
    use_dropout = dropout_seed is not None and arch.dropout > 0.0

    if arch.kind == "cnn":
        h = features.reshape((batch,) + arch.image_shape())
        k = arch.kernel_size
        for i in range(len(arch.channels)):
            weight = params[f"conv{i}.weight"]
            rows, out_channels = int(np.prod(weight.shape[:-1])), weight.shape[-1]
            height, width = _shape(h)[1] - k + 1, _shape(h)[2] - k + 1
            z = ops.add_bias(ops.matmul(ops.im2col(h, k), ops.reshape(weight, (rows, out_channels))),
                             params[f"conv{i}.bias"])
            h = ops.max_pool(activate(ops.reshape(z, (batch, height, width, out_channels))), arch.pool_size)
        h = ops.reshape(h, (batch, -1))
    else:
        h = features.reshape(batch, -1)

    for i in range(len(arch.hidden)):
        h = activate(ops.add_bias(ops.matmul(h, params[f"dense{i}.weight"]), params[f"dense{i}.bias"]))
        if use_dropout:
            h = ops.dropout(h, arch.dropout, _layer_seed(dropout_seed, i))
    return ops.add_bias(ops.matmul(h, params["out.weight"]), params["out.bias"])


def batch_loss(theta: Theta, arch: Architecture, features: np.ndarray, labels: np.ndarray,
               dropout_seed: Optional[int] = None):
    """Mean cross-entropy of a batch."""
    if len(labels) == 0:
        raise DatasetError("loss needs a non-empty batch")
    return ops.softmax_cross_entropy(logits(theta, arch, features, dropout_seed), labels)


def forward_loss(params: ParamVector, arch: Architecture, batch, dropout_seed: Optional[int] = None) -> Var:
    """Trace the batch loss on a fresh tape; ``loss.tape.leaves[0]`` is the parameter leaf."""
    tape = Tape()
    theta = tape.leaf(params.values)
    loss = batch_loss(theta, arch, batch.features.data, batch.labels, dropout_seed)
    tape.mark_output(loss)
    return loss


def evaluate(params: ParamVector, arch: Architecture, dataset, chunk: int = 2048) -> Evaluation:
    """Accuracy under argmax (ties to the lowest class index) and mean cross-entropy."""
    total = len(dataset)
    if total == 0:
        raise DatasetError("cannot evaluate on an empty dataset")
    correct, loss_sum = 0, 0.0
    for start in range(0, total, chunk):
        features = dataset.features.data[start:start + chunk]
        labels = dataset.labels[start:start + chunk]
        scores = logits(params.values, arch, features)
        correct += int(np.sum(np.argmax(scores.data, axis=1) == labels))
        loss_sum += ops.softmax_cross_entropy(scores, labels).item() * len(labels)
    return Evaluation(accuracy=correct / total, loss=loss_sum / total)


def _shape(value) -> tuple:
    return value.shape if isinstance(value, (Var, Tensor)) else np.shape(value)


def _layer_seed(seed: int, layer: int) -> int:
    return int(np.random.SeedSequence([seed, layer]).generate_state(1)[0])
