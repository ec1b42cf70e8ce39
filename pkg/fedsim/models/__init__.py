from fedsim.models.architectures import PRESETS, Architecture
from fedsim.models.network import Evaluation, batch_loss, evaluate, forward_loss, init_params, logits
from fedsim.models.params import Layout, ParamVector

__all__ = [
    "Architecture", "Evaluation", "Layout", "PRESETS", "ParamVector",
    "batch_loss", "evaluate", "forward_loss", "init_params", "logits",
]
