"""Full-pipeline backward pass and a toy binary classification task.

The toy task separates images holding one large smooth blob from images where
a small checkerboard-textured blob sits up and to the right of it, a
superscript-like layout.
Training is plain full-batch gradient descent on the logistic loss.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .autograd import (
    avg_pool_backward,
    channel_attention_backward,
    fab_backward,
    global_avg_pool_backward,
    linear_head_backward,
    mlp_block_backward,
    patch_embed_backward,
    stub_backward,
)
from .errors import NumericError
from .extractor import ExtractorConfig
from .model import ForwardTrace, ModelConfig, ModelParams, forward_trace, freq_input, pad_shared

TOY_SIZE = 64
TOY_LR = 0.3


def toy_config(**kw) -> ModelConfig:
    """Desk-scale model used by the toy task: C=16, two MLP blocks."""
    base = ModelConfig(extractor=ExtractorConfig(channels=16, num_blocks=2, reduction=4))
    return base.with_(**kw) if kw else base


def _disk(yy, xx, cy, cx, r):
    return ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.float64)


def _gaussian(yy, xx, cy, cx, sigma):
    return np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma * sigma))


def make_dataset(seed: int = 0, count: int = 16, size: int = TOY_SIZE):
    """Balanced set of ``count`` ``1 x size x size`` images in [0, 1] and 0/1 labels.

    The large blob is a smooth Gaussian, so almost all of its energy is low
    frequency. Odd indices get the textured superscript blob.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    texture = ((yy + xx) % 2).astype(np.float64)
    images = np.zeros((count, 1, size, size))
    labels = np.arange(count) % 2
    for i in range(count):
        sigma = rng.uniform(0.09, 0.12) * size
        cy = rng.uniform(0.5, 0.65) * size
        cx = rng.uniform(0.3, 0.45) * size
        img = _gaussian(yy, xx, cy, cx, sigma)
        if labels[i]:
            sr = rng.uniform(0.09, 0.11) * size
            dy = 2 * sigma + rng.uniform(0.0, 0.06) * size
            dx = 2 * sigma + rng.uniform(0.0, 0.06) * size
            # checkerboard fill puts the small blob's energy at the highest frequencies
            img = np.maximum(img, _disk(yy, xx, cy - dy, cx + dx, sr) * texture)
        images[i, 0] = img
    return images, labels.astype(np.float64)


def logistic_loss(logit: float, label: float) -> float:
    # softplus(z) - y*z, stable for either sign
    return max(logit, 0.0) + math.log1p(math.exp(-abs(logit))) - label * logit


def model_backward(params: ModelParams, tr: ForwardTrace, dlogit: float) -> dict[str, np.ndarray]:
    """Gradients of ``dlogit * logit`` for every tensor in ``params.named()``."""
    cfg = params.config
    ext = params.extractor
    grads = {}
    dpooled, g = linear_head_backward(tr.pooled, params.head_w, params.head_b, np.array([dlogit]))
    grads.update(g)
    dfused = global_avg_pool_backward(dpooled, tr.fused.shape)
    if cfg.fab:
        (dK, dT), g = fab_backward(tr.K, tr.T, params.fab, dfused)
        grads.update(g)
    else:
        dK = dT = dfused
        grads.update({k: np.zeros_like(v) for k, v in params.fab.named().items()})
    _, g = stub_backward(tr.padded, params.stub, dT, tr.stub_acts)
    grads.update(g)
    d = avg_pool_backward(dK, ext.config.pool_factor, tr.pre_pool.shape)
    if cfg.channel_att:
        d, g = channel_attention_backward(tr.pre_attention, ext.ca, d)
        grads.update({f"ca.{k}": v for k, v in g.items()})
    else:
        grads.update({f"ca.{k}": np.zeros_like(v) for k, v in ext.ca.named().items()})
    for k in reversed(range(len(ext.blocks))):
        d, g = mlp_block_backward(tr.block_inputs[k], ext.blocks[k], d)
        grads.update({f"mlp{k}.{name}": v for name, v in g.items()})
    _, g = patch_embed_backward(tr.freq, ext.embed_w, ext.embed_b, d)
    grads.update(g)
    return grads


@dataclass
class Batch:
    padded: list
    freq: list
    labels: np.ndarray


def prepare_batch(images, labels, config: ModelConfig) -> Batch:
    padded = [pad_shared(img) for img in images]
    return Batch(padded, [freq_input(p, config) for p in padded], np.asarray(labels, dtype=np.float64))


def batch_loss_and_grads(params: ModelParams, batch: Batch, with_grads: bool = True):
    n = len(batch.padded)
    total = 0.0
    grads = None
    for p, f, y in zip(batch.padded, batch.freq, batch.labels):
        tr = forward_trace(params, p, f)
        total += logistic_loss(tr.logit, y)
        if with_grads:
            g = model_backward(params, tr, (float(tc.sigmoid(tr.logit)) - y) / n)
            if grads is None:
                grads = g
            else:
                for k, v in g.items():
                    grads[k] += v
    return total / n, grads


def train_toy(
    dataset_seed: int = 0,
    steps: int = 300,
    lr: float = TOY_LR,
    init_seed: int = 0,
    config: ModelConfig | None = None,
    count: int = 16,
    callback=None,
) -> list[float]:
    """Full-batch gradient descent; returns the loss measured before each update."""
    config = config or toy_config()
    images, labels = make_dataset(dataset_seed, count)
    batch = prepare_batch(images, labels, config)
    params = ModelParams.init(config, init_seed)
    tensors = params.named()
    trace = []
    for step in range(steps):
        loss, grads = batch_loss_and_grads(params, batch, with_grads=lr != 0)
        if not math.isfinite(loss):
            raise NumericError(f"loss became non-finite at step {step}")
        trace.append(loss)
        if callback is not None:
            callback(step, loss)
        if lr:
            for name, arr in tensors.items():
                arr -= lr * grads[name]
    return trace


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss"])
        for i, v in enumerate(trace):
            w.writerow([i, repr(float(v))])
