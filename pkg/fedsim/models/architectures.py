from typing import Dict, List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from fedsim.models.params import Layout


class Architecture(BaseModel):
    """Model description; a flat ParamVector is laid out by ``layout()``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["logreg", "mlp", "cnn"]
    input_shape: Tuple[int, ...]
    classes: int = Field(ge=2)
    hidden: Tuple[int, ...] = ()
    channels: Tuple[int, ...] = (8, 16)
    kernel_size: int = Field(5, ge=1)
    pool_size: int = Field(2, ge=1)
    activation: Literal["relu", "tanh"] = "relu"
    dropout: float = Field(0.0, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_chain(self) -> "Architecture":
        if not self.input_shape or any(d <= 0 for d in self.input_shape):
            raise ValueError(f"input_shape must have positive extents, got {self.input_shape}")
        if any(width <= 0 for width in self.hidden):
            raise ValueError("hidden widths must be positive")
        if self.kind == "logreg" and self.hidden:
            raise ValueError("logreg has no hidden layers")
        if self.kind == "mlp" and not self.hidden:
            raise ValueError("mlp needs at least one hidden width")
        if self.kind == "cnn":
            if len(self.input_shape) not in (2, 3):
                raise ValueError("cnn input_shape must be (H, W) or (H, W, C)")
            if not self.channels or any(c <= 0 for c in self.channels):
                raise ValueError("cnn needs positive conv channels")
            self.conv_output_shape()
        return self

    @property
    def feature_width(self) -> int:
        return int(np.prod(self.input_shape))

    def image_shape(self) -> Tuple[int, int, int]:
        if len(self.input_shape) == 2:
            return self.input_shape[0], self.input_shape[1], 1
        return self.input_shape  # type: ignore[return-value]

    def conv_output_shape(self) -> Tuple[int, int, int]:
        """Spatial shape after every valid conv + pool stage."""
        h, w, c = self.image_shape()
        for channels in self.channels:
            h, w = h - self.kernel_size + 1, w - self.kernel_size + 1
            if h <= 0 or w <= 0:
                raise ValueError(f"kernel {self.kernel_size} does not fit the feature map")
            h, w = h // self.pool_size, w // self.pool_size
            if h <= 0 or w <= 0:
                raise ValueError(f"pool {self.pool_size} empties the feature map")
            c = channels
        return h, w, c

    def layout(self) -> Layout:
        entries: List[Tuple[str, Tuple[int, ...]]] = []
        if self.kind == "cnn":
            in_channels = self.image_shape()[2]
            for i, channels in enumerate(self.channels):
                k = self.kernel_size
                entries.append((f"conv{i}.weight", (k, k, in_channels, channels)))
                entries.append((f"conv{i}.bias", (channels,)))
                in_channels = channels
            width = int(np.prod(self.conv_output_shape()))
        else:
            width = self.feature_width
        for i, hidden in enumerate(self.hidden):
            entries.append((f"dense{i}.weight", (width, hidden)))
            entries.append((f"dense{i}.bias", (hidden,)))
            width = hidden
        entries.append(("out.weight", (width, self.classes)))
        entries.append(("out.bias", (self.classes,)))
        return Layout.of(entries)

    @classmethod
    def preset(cls, name: str) -> "Architecture":
        try:
            return cls(**PRESETS[name])
        except KeyError:
            raise ValueError(f"unknown architecture preset {name!r}; known: {sorted(PRESETS)}") from None


PRESETS: Dict[str, dict] = {
    "desk-mlp": {"kind": "mlp", "input_shape": (784,), "classes": 10, "hidden": (128,)},
    "desk-cnn": {"kind": "cnn", "input_shape": (28, 28), "classes": 10, "channels": (8, 16)},
    "femnist-cnn": {
        "kind": "cnn", "input_shape": (28, 28), "classes": 62,
        "channels": (32, 64), "hidden": (512,), "dropout": 0.5,
    },
    "cifar-cnn": {
        "kind": "cnn", "input_shape": (32, 32, 3), "classes": 10,
        "channels": (64, 64), "hidden": (384, 192), "dropout": 0.5,
    },
}
