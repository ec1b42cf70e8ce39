"""Gaussian-blob classification data for desk-scale experiments."""
import numpy as np

from fedsim.autodiff.tensor import Tensor
from fedsim.data.dataset import Dataset
from fedsim.errors import DatasetError


def class_means(classes: int, dims: int, separation: float, seed: int) -> np.ndarray:
    """One mean per class on the sphere of radius ``separation``.

    Means are mutually orthogonal when ``classes <= dims``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    raw = rng.standard_normal((dims, classes))
    if classes <= dims:
        directions, _ = np.linalg.qr(raw)
        directions = directions[:, :classes].T
    else:
        directions = (raw / np.linalg.norm(raw, axis=0, keepdims=True)).T
    return separation * directions


def synth_classification(classes: int, dims: int, per_class: int, separation: float, seed: int,
                         shift: float = 0.0, stream: int = 0) -> Dataset:
    """Sample ``per_class`` unit-covariance examples around each class mean.

    Args:
        classes: Number of classes.
        dims: Feature dimension.
        per_class: Examples drawn for every class.
        separation: Radius of the sphere the class means lie on.
        seed: Fixes the class means and every sample stream.
        shift: Length of a constant offset added to every example; its direction
            depends on ``seed`` only, so every stream of a dataset shares it.
        stream: Selects an independent sample stream over the same class means.

    Returns:
        Dataset of shape [classes * per_class, dims] in shuffled order.
    """
    if classes < 1 or dims < 1 or per_class < 1:
        raise DatasetError(f"classes, dims and per_class must be positive, got {classes}, {dims}, {per_class}")
    if separation < 0:
        raise DatasetError(f"separation must be non-negative, got {separation}")
    means = class_means(classes, dims, separation, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1, stream]))
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    features = means[labels] + rng.standard_normal((labels.size, dims))
    if shift:
        offset = np.random.default_rng(np.random.SeedSequence([seed, 2])).standard_normal(dims)
        features = features + shift * offset / np.linalg.norm(offset)
    order = rng.permutation(labels.size)
    return Dataset(Tensor.wrap(features[order]), labels[order], classes)
