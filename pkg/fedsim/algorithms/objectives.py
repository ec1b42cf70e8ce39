"""Losses that client and meta updates optimise.

An objective owns a pool of examples and returns the mean loss over any
subset of row indices, as a tape variable when traced or a Tensor when
evaluated eagerly.
"""
from typing import Optional, Protocol, Sequence, Union

import numpy as np

from fedsim.autodiff import ops
from fedsim.autodiff.functional import LossAt
from fedsim.autodiff.tape import Var
from fedsim.autodiff.tensor import Tensor
from fedsim.data.dataset import Dataset
from fedsim.errors import DatasetError, ShapeError
from fedsim.models.architectures import Architecture
from fedsim.models.network import batch_loss
from fedsim.models.params import Layout, ParamVector

Theta = Union[Var, Tensor]


class Objective(Protocol):
    @property
    def rows(self) -> int:
        """Number of examples in the pool."""
        ...

    def loss(self, theta: Theta, rows: Sequence[int], dropout_seed: Optional[int] = None):
        ...


class ModelObjective:
    """Mean cross-entropy of an architecture over rows of a dataset."""

    def __init__(self, arch: Architecture, dataset: Dataset):
        if dataset.feature_shape != tuple(arch.input_shape):
            raise ShapeError(f"dataset features {dataset.feature_shape} do not fit model input {arch.input_shape}")
        if dataset.class_count > arch.classes:
            raise ShapeError(f"dataset has {dataset.class_count} classes, model predicts {arch.classes}")
        self.arch = arch
        self.dataset = dataset

    @property
    def rows(self) -> int:
        return len(self.dataset)

    def loss(self, theta: Theta, rows: Sequence[int], dropout_seed: Optional[int] = None):
        rows = _rows(rows)
        return batch_loss(theta, self.arch, self.dataset.features.data[rows], self.dataset.labels[rows], dropout_seed)


class QuadraticObjective:
    """Per-example diagonal quadratics: mean over rows of 0.5 * sum_j a_ij (theta_j - c_ij)^2."""

    def __init__(self, curvature: np.ndarray, center: np.ndarray):
        curvature = np.atleast_2d(np.asarray(curvature, dtype=np.float64))
        center = np.atleast_2d(np.asarray(center, dtype=np.float64))
        if curvature.shape != center.shape:
            raise ShapeError(f"curvature {curvature.shape} and center {center.shape} differ")
        self.curvature = curvature
        self.center = center

    @property
    def rows(self) -> int:
        return self.center.shape[0]

    @property
    def dims(self) -> int:
        return self.center.shape[1]

    def layout(self) -> Layout:
        return Layout.of([("w", (self.dims,))])

    def params(self, values) -> ParamVector:
        return ParamVector.zeros(self.layout()).with_values(np.asarray(values, dtype=np.float64).reshape(-1))

    def loss(self, theta: Theta, rows: Sequence[int], dropout_seed: Optional[int] = None):
        rows = _rows(rows)
        diff = ops.add_bias(-self.center[rows], theta)
        weighted = ops.mul(ops.mul(diff, diff), self.curvature[rows])
        return ops.scale(ops.reduce_sum(weighted), 0.5 / len(rows))

    @staticmethod
    def stacked(*clients: "QuadraticObjective") -> "QuadraticObjective":
        return QuadraticObjective(np.concatenate([c.curvature for c in clients]),
                                  np.concatenate([c.center for c in clients]))


def loss_fn(objective: Objective, rows: Sequence[int], dropout_seed: Optional[int] = None) -> LossAt:
    """Bind an objective to a fixed batch, giving a function of the parameters alone."""
    rows = _rows(rows)
    return lambda theta: objective.loss(theta, rows, dropout_seed)


def loss_value(objective: Objective, params: ParamVector, rows: Optional[Sequence[int]] = None) -> float:
    rows = np.arange(objective.rows) if rows is None else rows
    return objective.loss(params.values, rows).item()


def _rows(rows: Sequence[int]) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64).reshape(-1)
    if rows.size == 0:
        raise DatasetError("loss needs a non-empty batch")
    return rows
