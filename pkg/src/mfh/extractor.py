"""Frequency feature extractor.

Pipeline: patch embedding (kernel n, stride n) -> residual MLP blocks ->
squeeze-excitation channel gate -> additive 2-D sinusoidal position code ->
average pooling down to 1/16 of the padded input resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor_core as tc
from .errors import DimensionError, ParameterError
from .freq_transform import COEFF, FreqImage, preprocess

TOTAL_STRIDE = 16


@dataclass(frozen=True)
class ExtractorConfig:
    channels: int = 256
    patch_size: int = 8
    num_blocks: int = 6
    expansion: int = 2
    reduction: int = 16
    dropout: float = 0.3
    pe_scale: float = 1.0

    def __post_init__(self):
        c = self.channels
        if c < 4 or c % 4:
            raise ParameterError(f"channels must be a positive multiple of 4, got {c}")
        if self.reduction < 1 or c % self.reduction:
            raise ParameterError(f"channels {c} not divisible by reduction {self.reduction}")
        if self.patch_size < 2:
            raise ParameterError(f"patch size must be >= 2, got {self.patch_size}")
        if TOTAL_STRIDE % self.patch_size:
            raise ParameterError(f"patch size {self.patch_size} must divide {TOTAL_STRIDE}")
        if self.num_blocks < 1:
            raise ParameterError("need at least one MLP block")
        if self.expansion < 1:
            raise ParameterError("expansion must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def hidden(self) -> int:
        return self.expansion * self.channels

    @property
    def squeeze(self) -> int:
        return self.channels // self.reduction

    @property
    def pool_factor(self) -> int:
        return TOTAL_STRIDE // self.patch_size


@dataclass
class MlpBlockParams:
    ln_g: np.ndarray
    ln_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray

    _names = ("ln.g", "ln.b", "fc1.w", "fc1.b", "fc2.w", "fc2.b")

    def named(self) -> dict[str, np.ndarray]:
        return dict(zip(self._names, (self.ln_g, self.ln_b, self.fc1_w, self.fc1_b, self.fc2_w, self.fc2_b)))

    @classmethod
    def from_named(cls, t: dict) -> "MlpBlockParams":
        return cls(*(np.asarray(t[k], dtype=np.float64) for k in cls._names))


@dataclass
class ChannelAttentionParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def named(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    @classmethod
    def from_named(cls, t: dict) -> "ChannelAttentionParams":
        return cls(*(np.asarray(t[k], dtype=np.float64) for k in ("w1", "b1", "w2", "b2")))


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    s = np.sqrt(1.0 / fan_in)
    return rng.uniform(-s, s, size=shape)


@dataclass
class ExtractorParams:
    config: ExtractorConfig
    embed_w: np.ndarray
    embed_b: np.ndarray
    blocks: list = field(default_factory=list)
    ca: ChannelAttentionParams = None

    @classmethod
    def init(cls, config: ExtractorConfig, seed=0) -> "ExtractorParams":
        rng = np.random.default_rng(seed)
        c, n, hid, sq = config.channels, config.patch_size, config.hidden, config.squeeze
        embed_w = uniform_init(rng, (c, 1, n, n), n * n)
        blocks = []
        for _ in range(config.num_blocks):
            blocks.append(
                MlpBlockParams(
                    ln_g=np.ones(c),
                    ln_b=np.zeros(c),
                    fc1_w=uniform_init(rng, (hid, c), c),
                    fc1_b=np.zeros(hid),
                    fc2_w=uniform_init(rng, (c, hid), hid),
                    fc2_b=np.zeros(c),
                )
            )
        ca = ChannelAttentionParams(
            w1=uniform_init(rng, (sq, c), c),
            b1=np.zeros(sq),
            w2=uniform_init(rng, (c, sq), sq),
            b2=np.zeros(c),
        )
        return cls(config, embed_w, np.zeros(c), blocks, ca)

    def named(self) -> dict[str, np.ndarray]:
        """Tensors under their weight-file names. Arrays are shared, not copied."""
        out = {"embed.w": self.embed_w, "embed.b": self.embed_b}
        for k, blk in enumerate(self.blocks):
            for name, arr in blk.named().items():
                out[f"mlp{k}.{name}"] = arr
        for name, arr in self.ca.named().items():
            out[f"ca.{name}"] = arr
        return out

    @classmethod
    def from_named(cls, config: ExtractorConfig, tensors: dict) -> "ExtractorParams":
        try:
            blocks = [
                MlpBlockParams.from_named({n: tensors[f"mlp{k}.{n}"] for n in MlpBlockParams._names})
                for k in range(config.num_blocks)
            ]
            ca = ChannelAttentionParams.from_named({n: tensors[f"ca.{n}"] for n in ("w1", "b1", "w2", "b2")})
            params = cls(
                config,
                np.asarray(tensors["embed.w"], dtype=np.float64),
                np.asarray(tensors["embed.b"], dtype=np.float64),
                blocks,
                ca,
            )
        except KeyError as exc:
            raise ParameterError(f"missing extractor tensor {exc.args[0]!r}") from None
        params.validate()
        return params

    def validate(self) -> None:
        cfg = self.config
        c, n, hid, sq = cfg.channels, cfg.patch_size, cfg.hidden, cfg.squeeze
        expect = {"embed.w": (c, 1, n, n), "embed.b": (c,), "ca.w1": (sq, c), "ca.b1": (sq,),
                  "ca.w2": (c, sq), "ca.b2": (c,)}
        for k in range(cfg.num_blocks):
            expect.update({f"mlp{k}.ln.g": (c,), f"mlp{k}.ln.b": (c,), f"mlp{k}.fc1.w": (hid, c),
                           f"mlp{k}.fc1.b": (hid,), f"mlp{k}.fc2.w": (c, hid), f"mlp{k}.fc2.b": (c,)})
        got = self.named()
        for name, shape in expect.items():
            if got[name].shape != shape:
                raise DimensionError(f"{name} has shape {got[name].shape}, expected {shape}")


def patch_embed(freq, embed_w, embed_b) -> np.ndarray:
    """Embed each ``n x n`` block as one ``C``-vector: ``C x H'/n x W'/n``."""
    data = freq.data if isinstance(freq, FreqImage) else np.asarray(freq)
    n = embed_w.shape[-1]
    if data.ndim != 3 or data.shape[1] % n or data.shape[2] % n:
        raise DimensionError(f"frequency image {data.shape} not divisible by patch size {n}")
    return tc.conv2d(data, embed_w, embed_b, stride=n, padding=0)


def dropout_mask(rng, shape, p):
    """Inverted-dropout mask, or None when dropout is off."""
    if rng is None or p <= 0.0:
        return None
    return (rng.random(shape) >= p) / (1.0 - p)


def mlp_block(tokens, block: MlpBlockParams, dropout: float = 0.0, rng=None) -> np.ndarray:
    """Pre-norm residual MLP applied independently at each spatial location.

    Passing ``rng=None`` is deterministic mode: dropout is skipped.
    """
    tokens = np.asarray(tokens)
    c, h, w = tokens.shape
    if block.ln_g.shape != (c,):
        raise DimensionError(f"block expects {block.ln_g.shape[0]} channels, tokens have {c}")
    x = tokens.reshape(c, h * w).T
    z = tc.layer_norm(x, block.ln_g, block.ln_b)
    a = tc.gelu(z @ block.fc1_w.T + block.fc1_b)
    mask1 = dropout_mask(rng, a.shape, dropout)
    if mask1 is not None:
        a = a * mask1
    y = a @ block.fc2_w.T + block.fc2_b
    mask2 = dropout_mask(rng, y.shape, dropout)
    if mask2 is not None:
        y = y * mask2
    return tokens + y.T.reshape(c, h, w)


def channel_attention(tokens, ca: ChannelAttentionParams) -> np.ndarray:
    tokens = np.asarray(tokens)
    if ca.w1.shape[1] != tokens.shape[0]:
        raise DimensionError(f"attention expects {ca.w1.shape[1]} channels, tokens have {tokens.shape[0]}")
    return tokens * channel_gate(tokens, ca)[:, None, None]


def channel_gate(tokens, ca: ChannelAttentionParams) -> np.ndarray:
    squeezed = tc.relu(ca.w1 @ tc.global_avg_pool(tokens) + ca.b1)
    return tc.sigmoid(ca.w2 @ squeezed + ca.b2)


def sinusoid_1d(pos, dim: int) -> np.ndarray:
    """``dim``-long code for each position: even slots sin, odd slots cos."""
    pos = np.asarray(pos, dtype=np.float64)
    i = np.arange(dim // 2)
    freq = 10000.0 ** (2 * i / dim)
    angles = pos[..., None] / freq
    out = np.empty(pos.shape + (dim,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def positional_encoding_2d(h: int, w: int, d: int, scale: float = 1.0) -> np.ndarray:
    """``d x h x w`` code: first ``d/2`` channels encode row, last ``d/2`` column.

    Rows and columns are normalized to ``x/h`` and ``y/w`` before scaling.
    """
    if d < 4 or d % 4:
        raise ParameterError(f"encoding dimension must be a positive multiple of 4, got {d}")
    half = d // 2
    rows = sinusoid_1d(scale * np.arange(h) / h, half)
    cols = sinusoid_1d(scale * np.arange(w) / w, half)
    pe = np.empty((d, h, w))
    pe[:half] = rows.T[:, :, None]
    pe[half:] = cols.T[:, None, :]
    return pe


def downsample_to_match(tokens, factor: int = 2) -> np.ndarray:
    """Ceil-mode average pooling with window and stride ``factor``."""
    return tc.avg_pool(tokens, factor)


def extract(freq, params: ExtractorParams, channel_att=True, pos_enc=True, rng=None) -> np.ndarray:
    """Run the extractor on an already preprocessed frequency image."""
    cfg = params.config
    x = patch_embed(freq, params.embed_w, params.embed_b)
    for blk in params.blocks:
        x = mlp_block(x, blk, cfg.dropout, rng)
    if channel_att:
        x = channel_attention(x, params.ca)
    if pos_enc:
        x = x + positional_encoding_2d(x.shape[1], x.shape[2], cfg.channels, cfg.pe_scale)
    return downsample_to_match(x, cfg.pool_factor)


def extractor_forward(
    image,
    params: ExtractorParams,
    m: int = 5,
    mode: str = COEFF,
    channel_att: bool = True,
    pos_enc: bool = True,
    rng=None,
) -> np.ndarray:
    """Image ``1 x H x W`` in [0, 1] to frequency feature ``C x ceil(H'/16) x ceil(W'/16)``."""
    freq = preprocess(image, params.config.patch_size, m, mode)
    return extract(freq, params, channel_att, pos_enc, rng)
