"""Small convolutional stand-in for a CNN backbone.

Four 3x3 stride-2 convolutions (1 -> 16 -> 32 -> 64 -> C), each followed by
ReLU, bring a ``1 x H x W`` image to ``C x ceil(H/16) x ceil(W/16)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .errors import DimensionError, ParameterError
from .extractor import uniform_init

WIDTHS = (16, 32, 64)


@dataclass
class StubParams:
    weights: list
    biases: list

    @classmethod
    def init(cls, channels: int, seed=0) -> "StubParams":
        rng = np.random.default_rng(seed)
        chans = (1, *WIDTHS, channels)
        ws, bs = [], []
        for cin, cout in zip(chans[:-1], chans[1:]):
            ws.append(uniform_init(rng, (cout, cin, 3, 3), cin * 9))
            bs.append(np.zeros(cout))
        return cls(ws, bs)

    @property
    def channels(self) -> int:
        return self.weights[-1].shape[0]

    def named(self) -> dict[str, np.ndarray]:
        out = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"stub.conv{k}.w"] = w
            out[f"stub.conv{k}.b"] = b
        return out

    @classmethod
    def from_named(cls, tensors: dict) -> "StubParams":
        try:
            ws = [np.asarray(tensors[f"stub.conv{k}.w"], dtype=np.float64) for k in range(4)]
            bs = [np.asarray(tensors[f"stub.conv{k}.b"], dtype=np.float64) for k in range(4)]
        except KeyError as exc:
            raise ParameterError(f"missing stub tensor {exc.args[0]!r}") from None
        return cls(ws, bs)


def stub_stages(image, params: StubParams) -> list[np.ndarray]:
    """Input followed by each stage's post-ReLU activation."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 1:
        raise DimensionError(f"expected a 1 x H x W image, got {x.shape}")
    acts = [x]
    for w, b in zip(params.weights, params.biases):
        x = tc.relu(tc.conv2d(x, w, b, stride=2, padding=1))
        acts.append(x)
    return acts


def stub_forward(image, params: StubParams) -> np.ndarray:
    return stub_stages(image, params)[-1]
