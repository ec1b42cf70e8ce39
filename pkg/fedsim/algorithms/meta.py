import numpy as np

from fedsim.algorithms.objectives import Objective, loss_fn, loss_value
from fedsim.autodiff.functional import grad
from fedsim.errors import ConfigError, DatasetError
from fedsim.models.params import ParamVector


def meta_update(params: ParamVector, meta: Objective, lr_meta: float, steps: int = 1) -> ParamVector:
    """``steps`` full-batch gradient steps on the server-held meta objective."""
    if steps < 1:
        raise ConfigError(f"meta steps must be at least 1, got {steps}")
    if meta.rows == 0:
        raise DatasetError("meta set is empty")
    rows = np.arange(meta.rows)
    current = params
    for _ in range(steps):
        current = current - grad(loss_fn(meta, rows), current) * lr_meta
    return current


def meta_loss(params: ParamVector, meta: Objective) -> float:
    return loss_value(meta, params)
