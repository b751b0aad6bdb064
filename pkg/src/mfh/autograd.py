"""Hand-written backward passes and central-difference gradient checking.

Every ``*_backward`` function takes the block's forward inputs, its
parameters and the upstream gradient, recomputes whatever intermediates it
needs, and returns ``(input_grad, param_grads)``. Parameter gradients are
dicts keyed like the weight-file names.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor_core as tc
from .errors import NumericError, ParameterError
from .extractor import ChannelAttentionParams, MlpBlockParams
from .fab import CONCAT, UNIT, FabParams, attention_map, fab_input
from .spatial_stub import StubParams, stub_stages

# primitives


def conv2d_backward(x, w, g, stride=1, padding=0):
    """Gradients of ``conv2d(x, w, b, stride, padding)`` given upstream ``g``."""
    k = w.shape[2]
    win = tc.conv_windows(x, k, stride, padding)  # Cin, Ho, Wo, k, k
    dw = np.tensordot(g, win, axes=([1, 2], [1, 2]))
    db = g.sum(axis=(1, 2))
    dcols = np.tensordot(w, g, axes=([0], [0]))  # Cin, k, k, Ho, Wo
    cin, h, wd = x.shape
    ho, wo = g.shape[1:]
    dxp = np.zeros((cin, h + 2 * padding, wd + 2 * padding))
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j]
    dx = dxp[:, padding : padding + h, padding : padding + wd]
    return dx, dw, db


def layer_norm_backward(x, gamma, g, eps=tc.LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    dgamma = (g * xhat).reshape(-1, x.shape[-1]).sum(axis=0)
    dbeta = g.reshape(-1, x.shape[-1]).sum(axis=0)
    dxhat = g * gamma
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


def avg_pool_backward(g, factor, in_shape):
    if factor == 1:
        return g.copy()
    c, h, w = in_shape
    up = np.repeat(np.repeat(g, factor, axis=1), factor, axis=2) / (factor * factor)
    return up[:, :h, :w]


def global_avg_pool_backward(g, in_shape):
    c, h, w = in_shape
    return np.broadcast_to(g[:, None, None] / (h * w), in_shape).copy()


# blocks


def patch_embed_backward(freq, embed_w, embed_b, g):
    n = embed_w.shape[-1]
    dx, dw, db = conv2d_backward(np.asarray(freq), embed_w, g, stride=n, padding=0)
    return dx, {"embed.w": dw, "embed.b": db}


def mlp_block_backward(tokens, block: MlpBlockParams, g, masks=(None, None)):
    c, h, w = tokens.shape
    x = tokens.reshape(c, h * w).T
    gy = g.reshape(c, h * w).T
    z = tc.layer_norm(x, block.ln_g, block.ln_b)
    pre = z @ block.fc1_w.T + block.fc1_b
    a = tc.gelu(pre)
    m1, m2 = masks
    if m1 is not None:
        a = a * m1
    if m2 is not None:
        gy_inner = gy * m2
    else:
        gy_inner = gy
    d_fc2_w = gy_inner.T @ a
    d_fc2_b = gy_inner.sum(axis=0)
    da = gy_inner @ block.fc2_w
    if m1 is not None:
        da = da * m1
    dpre = da * tc.gelu_grad(pre)
    d_fc1_w = dpre.T @ z
    d_fc1_b = dpre.sum(axis=0)
    dz = dpre @ block.fc1_w
    dx, dgamma, dbeta = layer_norm_backward(x, block.ln_g, dz)
    dtokens = g + dx.T.reshape(c, h, w)
    grads = {"ln.g": dgamma, "ln.b": dbeta, "fc1.w": d_fc1_w, "fc1.b": d_fc1_b, "fc2.w": d_fc2_w, "fc2.b": d_fc2_b}
    return dtokens, grads


def channel_attention_backward(tokens, ca: ChannelAttentionParams, g):
    c, h, w = tokens.shape
    s = tc.global_avg_pool(tokens)
    z1 = ca.w1 @ s + ca.b1
    u = tc.relu(z1)
    gate = tc.sigmoid(ca.w2 @ u + ca.b2)
    dgate = np.sum(g * tokens, axis=(1, 2))
    dz2 = dgate * gate * (1.0 - gate)
    du = ca.w2.T @ dz2
    dz1 = du * (z1 > 0)
    ds = ca.w1.T @ dz1
    dx = g * gate[:, None, None] + ds[:, None, None] / (h * w)
    grads = {"w1": np.outer(dz1, s), "b1": dz1, "w2": np.outer(dz2, u), "b2": dz2}
    return dx, grads


def fab_backward(K, T, params: FabParams, g):
    c = params.channels
    A = attention_map(K, T, params)
    v_k, v_t = params.vectors()
    dK = g * A[0] * v_k[:, None, None]
    dT = g * A[1] * v_t[:, None, None]
    dA = np.stack([np.sum(g * K * v_k[:, None, None], axis=0), np.sum(g * T * v_t[:, None, None], axis=0)])
    if params.variant.vectors == UNIT:
        dvk = np.zeros_like(params.v_k)
        dvt = np.zeros_like(params.v_t)
    else:
        dvk = np.sum(g * A[0] * K, axis=(1, 2))
        dvt = np.sum(g * A[1] * T, axis=(1, 2))
    dpre = dA * A * (1.0 - A)
    dinp, dw, db = conv2d_backward(fab_input(K, T, params.variant), params.conv_w, dpre, 1, 1)
    if params.variant.attention == CONCAT:
        dK = dK + dinp[:c]
        dT = dT + dinp[c:]
    else:
        dK = dK + dinp
        dT = dT + dinp
    return (dK, dT), {"fab.conv.w": dw, "fab.conv.b": db, "fab.vk": dvk, "fab.vt": dvt}


def stub_backward(image, params: StubParams, g, acts=None):
    """``acts`` may carry the forward activations from :func:`stub_stages`."""
    if acts is None:
        acts = stub_stages(image, params)
    grads = {}
    for k in reversed(range(len(params.weights))):
        g = g * (acts[k + 1] > 0)
        g, dw, db = conv2d_backward(acts[k], params.weights[k], g, stride=2, padding=1)
        grads[f"stub.conv{k}.w"] = dw
        grads[f"stub.conv{k}.b"] = db
    return g, grads


def linear_head(x, w, b):
    return w @ x + b


def linear_head_backward(x, w, b, g):
    return w.T @ g, {"head.w": np.outer(g, x), "head.b": np.asarray(g, dtype=np.float64).copy()}


BLOCKS = ("patch_embed", "mlp_block", "channel_attention", "fab_forward", "stub_forward", "linear_head")


def backward(block: str, inputs, params, upstream):
    """Dispatch to the backward pass of a named block.

    ``inputs`` is the forward input (a ``(K, T)`` pair for ``fab_forward``).
    ``params`` is the block's parameter object; for ``patch_embed`` and
    ``linear_head`` a ``(w, b)`` pair.
    """
    if block == "patch_embed":
        return patch_embed_backward(inputs, *params, upstream)
    if block == "mlp_block":
        return mlp_block_backward(inputs, params, upstream)
    if block == "channel_attention":
        return channel_attention_backward(inputs, params, upstream)
    if block == "fab_forward":
        return fab_backward(*inputs, params, upstream)
    if block == "stub_forward":
        return stub_backward(inputs, params, upstream)
    if block == "linear_head":
        return linear_head_backward(inputs, *params, upstream)
    raise ParameterError(f"unsupported block {block!r}; expected one of {BLOCKS}")


# numeric checking


def finite_diff_grad(loss_fn, params: dict, eps: float = 1e-6, indices: dict | None = None) -> dict:
    """Central differences of ``loss_fn()`` with respect to arrays in ``params``.

    Arrays are perturbed in place and restored. ``indices`` optionally limits
    each tensor to a list of flat positions; unprobed entries come back NaN.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    grads = {}
    for name, arr in params.items():
        flat = arr.reshape(-1)
        if not np.shares_memory(flat, arr):
            raise ParameterError(f"{name} is not contiguous; cannot perturb in place")
        out = np.full(arr.size, np.nan) if indices and name in indices else np.empty(arr.size)
        for i in (indices[name] if indices and name in indices else range(arr.size)):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn()
            flat[i] = orig - eps
            lo = loss_fn()
            flat[i] = orig
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise NumericError(f"non-finite loss while probing {name}[{i}]")
            out[i] = (hi - lo) / (2 * eps)
        grads[name] = out.reshape(arr.shape)
    return grads


@dataclass
class TensorCheck:
    """Agreement for one tensor.

    ``max_rel_error`` is ``max|a - n| / max(max|a|, max|n|, 1e-12)`` over the
    probed entries. ``max_elementwise_rel_error`` divides entry by entry and
    is informational only: entries near 1e-7 sit inside central-difference
    roundoff and dominate it.
    """

    max_abs_error: float
    max_rel_error: float
    max_elementwise_rel_error: float
    checked: int
    passed: bool


@dataclass
class GradReport:
    block: str
    seed: int
    threshold: float
    tensors: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.tensors.values())

    @property
    def max_rel_error(self) -> float:
        return max((t.max_rel_error for t in self.tensors.values()), default=0.0)

    def to_dict(self) -> dict:
        return {
            "block": self.block,
            "seed": self.seed,
            "threshold": self.threshold,
            "passed": self.passed,
            "tensors": {k: asdict(v) for k, v in self.tensors.items()},
        }


def compare(analytic, numeric, threshold) -> TensorCheck:
    sel = ~np.isnan(numeric)
    a = np.asarray(analytic)[sel]
    nu = numeric[sel]
    diff = np.abs(a - nu)
    mabs = float(diff.max(initial=0.0))
    scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(nu).max(initial=0.0)), 1e-12)
    mrel = mabs / scale
    elem = float((diff / np.maximum(np.maximum(np.abs(a), np.abs(nu)), 1e-12)).max(initial=0.0))
    return TensorCheck(mabs, mrel, elem, int(sel.sum()), mrel < threshold)


def reports_to_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2)
