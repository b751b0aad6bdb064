"""Fusion and alignment of the frequency stream K with the spatial stream T.

A 3x3 convolution compresses the two streams into a two-channel map
``A = sigmoid(conv(...))``. The first channel weights K, the second weights T,
each stream is additionally scaled per channel by its own vector, and the two
results are summed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .errors import DimensionError, ParameterError
from .extractor import uniform_init

CONCAT = "concat"
ADD = "add"
LEARNABLE = "learnable"
UNIT = "unit"
ATTENTION_MODES = (CONCAT, ADD)
VECTOR_MODES = (LEARNABLE, UNIT)


@dataclass(frozen=True)
class FabVariant:
    attention: str = CONCAT
    vectors: str = LEARNABLE

    def __post_init__(self):
        if self.attention not in ATTENTION_MODES:
            raise ParameterError(f"unknown attention mode {self.attention!r}")
        if self.vectors not in VECTOR_MODES:
            raise ParameterError(f"unknown vector mode {self.vectors!r}")

    @classmethod
    def parse(cls, text: str) -> "FabVariant":
        """Parse ``"concat+learnable"`` style names."""
        try:
            att, vec = text.split("+")
        except ValueError:
            raise ParameterError(f"variant must look like 'concat+learnable', got {text!r}") from None
        return cls(att, vec)

    def __str__(self):
        return f"{self.attention}+{self.vectors}"


ALL_VARIANTS = tuple(FabVariant(a, v) for a in ATTENTION_MODES for v in VECTOR_MODES)


@dataclass
class FabParams:
    conv_w: np.ndarray
    conv_b: np.ndarray
    v_k: np.ndarray
    v_t: np.ndarray
    variant: FabVariant = FabVariant()

    @classmethod
    def init(cls, channels: int, variant: FabVariant = FabVariant(), seed=0) -> "FabParams":
        rng = np.random.default_rng(seed)
        cin = 2 * channels if variant.attention == CONCAT else channels
        return cls(
            conv_w=uniform_init(rng, (2, cin, 3, 3), cin * 9),
            conv_b=np.zeros(2),
            v_k=np.ones(channels),
            v_t=np.ones(channels),
            variant=variant,
        )

    @property
    def channels(self) -> int:
        return self.v_k.shape[0]

    def vectors(self) -> tuple[np.ndarray, np.ndarray]:
        """The per-channel scales actually applied; pinned to one for the unit variant."""
        if self.variant.vectors == UNIT:
            return np.ones_like(self.v_k), np.ones_like(self.v_t)
        return self.v_k, self.v_t

    def named(self) -> dict[str, np.ndarray]:
        return {"fab.conv.w": self.conv_w, "fab.conv.b": self.conv_b, "fab.vk": self.v_k, "fab.vt": self.v_t}

    @classmethod
    def from_named(cls, tensors: dict, variant: FabVariant = FabVariant()) -> "FabParams":
        try:
            p = cls(*(np.asarray(tensors[k], dtype=np.float64) for k in ("fab.conv.w", "fab.conv.b", "fab.vk", "fab.vt")),
                    variant=variant)
        except KeyError as exc:
            raise ParameterError(f"missing FAB tensor {exc.args[0]!r}") from None
        c = p.channels
        cin = 2 * c if variant.attention == CONCAT else c
        if p.conv_w.shape != (2, cin, 3, 3) or p.conv_b.shape != (2,) or p.v_t.shape != (c,):
            raise DimensionError(f"FAB tensors inconsistent with {c} channels and variant {variant}")
        return p


def fab_input(K, T, variant: FabVariant) -> np.ndarray:
    if variant.attention == CONCAT:
        return np.concatenate([K, T], axis=0)
    return K + T


def attention_map(K, T, params: FabParams) -> np.ndarray:
    """Two-channel map in (0, 1) with the spatial size of K and T."""
    return tc.sigmoid(tc.conv2d(fab_input(K, T, params.variant), params.conv_w, params.conv_b, 1, 1))


def fab_forward(K, T, params: FabParams) -> np.ndarray:
    K = np.asarray(K, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if K.shape != T.shape:
        raise DimensionError(f"K {K.shape} and T {T.shape} must share a shape")
    if K.ndim != 3 or K.shape[0] != params.channels:
        raise DimensionError(f"expected {params.channels} x h x w features, got {K.shape}")
    A = attention_map(K, T, params)
    v_k, v_t = params.vectors()
    return A[0] * K * v_k[:, None, None] + A[1] * T * v_t[:, None, None]


def fab_variants(K, T, params: FabParams, variant=None) -> np.ndarray:
    """Run FAB under an explicit variant (object or ``"concat+learnable"`` string).

    The stored tensors must fit the variant's attention input width.
    """
    if variant is None:
        variant = params.variant
    elif isinstance(variant, str):
        variant = FabVariant.parse(variant)
    elif not isinstance(variant, FabVariant):
        raise ParameterError(f"unknown variant {variant!r}")
    p = FabParams(params.conv_w, params.conv_b, params.v_k, params.v_t, variant)
    expect = 2 * p.channels if variant.attention == CONCAT else p.channels
    if p.conv_w.shape[1] != expect:
        raise DimensionError(
            f"variant {variant} needs a conv over {expect} channels, weights have {p.conv_w.shape[1]}"
        )
    return fab_forward(K, T, p)
