"""Two-stream model: frequency extractor + spatial stub, fused, plus a scalar head.

Both streams read the same image padded once to a multiple of 16, so their
feature maps line up cell for cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor_core as tc
from .errors import ParameterError
from .extractor import (
    TOTAL_STRIDE,
    ExtractorConfig,
    ExtractorParams,
    channel_attention,
    downsample_to_match,
    mlp_block,
    patch_embed,
    positional_encoding_2d,
)
from .fab import FabParams, FabVariant, fab_forward
from .freq_transform import COEFF, MODES, pad_to_multiple, preprocess
from .spatial_stub import StubParams, stub_stages


@dataclass(frozen=True)
class ModelConfig:
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    retain: int = 5
    freq_mode: str = COEFF
    channel_att: bool = True
    pos_enc: bool = True
    fab: bool = True
    fab_variant: FabVariant = FabVariant()

    def __post_init__(self):
        n = self.extractor.patch_size
        if not 1 <= self.retain <= n:
            raise ParameterError(f"retention m={self.retain} outside [1, {n}]")
        if self.freq_mode not in MODES:
            raise ParameterError(f"unknown frequency mode {self.freq_mode!r}")

    def with_(self, **kw) -> "ModelConfig":
        ext_keys = {k: kw.pop(k) for k in list(kw) if k in ExtractorConfig.__dataclass_fields__}
        ext = replace(self.extractor, **ext_keys) if ext_keys else self.extractor
        return replace(self, extractor=ext, **kw)


@dataclass
class ModelParams:
    config: ModelConfig
    extractor: ExtractorParams
    stub: StubParams
    fab: FabParams
    head_w: np.ndarray
    head_b: np.ndarray

    @classmethod
    def init(cls, config: ModelConfig, seed=0) -> "ModelParams":
        ext_seed, stub_seed, fab_seed = np.random.SeedSequence(seed).spawn(3)
        c = config.extractor.channels
        return cls(
            config,
            ExtractorParams.init(config.extractor, ext_seed),
            StubParams.init(c, stub_seed),
            FabParams.init(c, config.fab_variant, fab_seed),
            # zero head: every logit starts at 0
            np.zeros((1, c)),
            np.zeros(1),
        )

    def named(self) -> dict[str, np.ndarray]:
        out = dict(self.extractor.named())
        out.update(self.stub.named())
        out.update(self.fab.named())
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    @classmethod
    def from_named(cls, config: ModelConfig, tensors: dict) -> "ModelParams":
        c = config.extractor.channels
        ext = ExtractorParams.from_named(config.extractor, tensors)
        stub = StubParams.from_named(tensors)
        fab = FabParams.from_named(tensors, config.fab_variant) if "fab.conv.w" in tensors else FabParams.init(
            c, config.fab_variant
        )
        head_w = np.asarray(tensors.get("head.w", np.zeros((1, c))), dtype=np.float64)
        head_b = np.asarray(tensors.get("head.b", np.zeros(1)), dtype=np.float64)
        return cls(config, ext, stub, fab, head_w, head_b)


def pad_shared(image) -> np.ndarray:
    """Pad once for both streams."""
    return pad_to_multiple(image, TOTAL_STRIDE)


@dataclass
class ForwardTrace:
    """Activations kept for the backward pass."""

    padded: np.ndarray
    freq: np.ndarray
    embedded: np.ndarray
    block_inputs: list
    pre_attention: np.ndarray
    pre_pool: np.ndarray
    K: np.ndarray
    stub_acts: list
    fused: np.ndarray
    pooled: np.ndarray
    logit: float

    @property
    def T(self) -> np.ndarray:
        return self.stub_acts[-1]


def freq_input(padded, config: ModelConfig) -> np.ndarray:
    return preprocess(padded, config.extractor.patch_size, config.retain, config.freq_mode).data


def forward_trace(params: ModelParams, padded, freq=None) -> ForwardTrace:
    """Deterministic forward pass recording every block boundary.

    ``padded`` must already be a multiple of 16; ``freq`` may be passed to
    reuse a cached preprocessing result.
    """
    cfg = params.config
    ext = params.extractor
    if freq is None:
        freq = freq_input(padded, cfg)
    x = patch_embed(freq, ext.embed_w, ext.embed_b)
    embedded = x
    block_inputs = []
    for blk in ext.blocks:
        block_inputs.append(x)
        x = mlp_block(x, blk)
    pre_attention = x
    if cfg.channel_att:
        x = channel_attention(x, ext.ca)
    if cfg.pos_enc:
        x = x + positional_encoding_2d(x.shape[1], x.shape[2], ext.config.channels, ext.config.pe_scale)
    pre_pool = x
    K = downsample_to_match(x, ext.config.pool_factor)
    stub_acts = stub_stages(padded, params.stub)
    T = stub_acts[-1]
    fused = fab_forward(K, T, params.fab) if cfg.fab else K + T
    pooled = tc.global_avg_pool(fused)
    logit = float((params.head_w @ pooled + params.head_b)[0])
    return ForwardTrace(padded, freq, embedded, block_inputs, pre_attention, pre_pool, K, stub_acts, fused, pooled, logit)


def stream_features(params: ModelParams, image) -> dict[str, np.ndarray]:
    """``K``, ``T`` and the fused map for one unpadded image."""
    tr = forward_trace(params, pad_shared(image))
    return {"k": tr.K, "t": tr.T, "fused": tr.fused}


def fused_features(params: ModelParams, image) -> np.ndarray:
    return forward_trace(params, pad_shared(image)).fused
