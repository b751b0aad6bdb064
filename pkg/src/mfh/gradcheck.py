"""Analytic-vs-numeric gradient checks for each learnable block.

Each check draws random inputs and parameters from a seed, forms the scalar
``L = sum(upstream * block(inputs))`` for a random ``upstream`` and compares
the hand-derived gradients against central differences.
"""

from __future__ import annotations

import numpy as np

from .autograd import BLOCKS, GradReport, backward, compare, finite_diff_grad, linear_head
from .errors import ParameterError
from .extractor import ChannelAttentionParams, MlpBlockParams, channel_attention, mlp_block, patch_embed
from .fab import FabParams, FabVariant, fab_forward
from .spatial_stub import StubParams, stub_forward

DEFAULT_THRESHOLD = 1e-4
DEFAULT_EPS = 1e-6
# larger tensors are probed at a seeded random subset of entries
DEFAULT_MAX_PROBE = 512


def _setup(block, rng, channels, patch_size, size, variant):
    """Return ``(tensors, forward, analytic)`` for one block.

    ``tensors`` holds every probed array (inputs and parameters) by name;
    ``forward()`` reads them live, ``analytic(upstream)`` returns gradients
    keyed the same way.
    """
    c, n = channels, patch_size
    g = rng.standard_normal
    h = w = size // n

    if block == "patch_embed":
        t = {"input": rng.uniform(-1, 1, (1, size, size)), "embed.w": 0.5 * g((c, 1, n, n)), "embed.b": g(c)}

        def fwd():
            return patch_embed(t["input"], t["embed.w"], t["embed.b"])

        def ana(up):
            dx, gr = backward(block, t["input"], (t["embed.w"], t["embed.b"]), up)
            return {"input": dx, **gr}

    elif block == "mlp_block":
        hid = 2 * c
        t = {"input": g((c, h, w)), "ln.g": 1 + 0.3 * g(c), "ln.b": 0.3 * g(c),
             "fc1.w": g((hid, c)) / np.sqrt(c), "fc1.b": 0.3 * g(hid),
             "fc2.w": g((c, hid)) / np.sqrt(hid), "fc2.b": 0.3 * g(c)}

        def blk():
            return MlpBlockParams.from_named(t)

        def fwd():
            return mlp_block(t["input"], blk())

        def ana(up):
            dx, gr = backward(block, t["input"], blk(), up)
            return {"input": dx, **gr}

    elif block == "channel_attention":
        sq = max(1, c // 4)
        t = {"input": g((c, h, w)), "w1": g((sq, c)), "b1": 0.5 * g(sq), "w2": g((c, sq)), "b2": 0.5 * g(c)}

        def ca():
            return ChannelAttentionParams.from_named(t)

        def fwd():
            return channel_attention(t["input"], ca())

        def ana(up):
            dx, gr = backward(block, t["input"], ca(), up)
            return {"input": dx, **gr}

    elif block == "fab_forward":
        cin = 2 * c if variant.attention == "concat" else c
        t = {"K": g((c, h, w)), "T": g((c, h, w)), "fab.conv.w": 0.3 * g((2, cin, 3, 3)),
             "fab.conv.b": 0.3 * g(2), "fab.vk": g(c), "fab.vt": g(c)}

        def fp():
            return FabParams(t["fab.conv.w"], t["fab.conv.b"], t["fab.vk"], t["fab.vt"], variant)

        def fwd():
            return fab_forward(t["K"], t["T"], fp())

        def ana(up):
            (dk, dt), gr = backward(block, (t["K"], t["T"]), fp(), up)
            return {"K": dk, "T": dt, **gr}

    elif block == "stub_forward":
        stub = StubParams.init(c)
        # He-scaled weights keep gradients well above central-difference noise
        for wt, b in zip(stub.weights, stub.biases):
            wt[:] = g(wt.shape) * np.sqrt(2.0 / (wt.shape[1] * 9))
            b[:] = 0.1 * g(b.shape)
        t = {"input": rng.uniform(0, 1, (1, size, size)), **stub.named()}

        def sp():
            return StubParams.from_named(t)

        def fwd():
            return stub_forward(t["input"], sp())

        def ana(up):
            dx, gr = backward(block, t["input"], sp(), up)
            return {"input": dx, **gr}

    elif block == "linear_head":
        t = {"input": g(c), "head.w": g((1, c)), "head.b": g(1)}

        def fwd():
            return linear_head(t["input"], t["head.w"], t["head.b"])

        def ana(up):
            dx, gr = backward(block, t["input"], (t["head.w"], t["head.b"]), up)
            return {"input": dx, **gr}

    else:
        raise ParameterError(f"unsupported block {block!r}; expected one of {BLOCKS}")
    return t, fwd, ana


def probe_indices(tensors: dict, rng, max_probe: int | None) -> dict | None:
    if not max_probe:
        return None
    return {
        k: np.sort(rng.choice(v.size, max_probe, replace=False))
        for k, v in tensors.items()
        if v.size > max_probe
    }


def check_block(
    block: str,
    seed: int = 0,
    channels: int = 8,
    patch_size: int = 4,
    size: int = 16,
    eps: float = DEFAULT_EPS,
    threshold: float = DEFAULT_THRESHOLD,
    max_probe: int | None = DEFAULT_MAX_PROBE,
    variant: FabVariant = FabVariant(),
) -> GradReport:
    rng = np.random.default_rng(seed)
    t, fwd, ana = _setup(block, rng, channels, patch_size, size, variant)
    up = rng.standard_normal(np.shape(fwd()))
    analytic = ana(up)

    def loss():
        return float(np.sum(up * fwd()))

    numeric = finite_diff_grad(loss, t, eps, probe_indices(t, rng, max_probe))
    report = GradReport(block, seed, threshold)
    for name in t:
        report.tensors[name] = compare(analytic[name], numeric[name], threshold)
    return report


def check_all(seeds=range(5), **kw) -> list[GradReport]:
    return [check_block(b, s, **kw) for b in BLOCKS for s in seeds]
