"""Blockwise DCT-II with high-frequency coefficient retention.

The input image is zero padded to a multiple of the block size, cut into
non-overlapping ``n x n`` blocks, transformed with an orthonormal 2-D DCT,
and every coefficient outside the bottom-right ``m x m`` corner of each table
is zeroed. The masked tables are reassembled into an image of the padded
size, which is what the frequency extractor consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionError, ParameterError

COEFF = "coeff"
SPATIAL = "spatial"
MODES = (COEFF, SPATIAL)


@dataclass(frozen=True)
class DctPlan:
    """Orthonormal DCT-II basis for block size ``n``.

    ``basis[u, x] = sqrt(2/n) * C(u) * cos((2x + 1) u pi / 2n)`` with
    ``C(0) = 1/sqrt(2)`` and ``C(u) = 1`` otherwise.
    """

    n: int
    basis: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def create(cls, n: int) -> "DctPlan":
        return _plan(int(n))


@lru_cache(maxsize=None)
def _plan(n: int) -> DctPlan:
    if n < 2:
        raise ParameterError(f"block size must be >= 2, got {n}")
    u = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    basis = np.sqrt(2.0 / n) * np.cos((2 * x + 1) * u * np.pi / (2 * n))
    basis[0] /= np.sqrt(2.0)
    basis.setflags(write=False)
    return DctPlan(n, basis)


@dataclass(frozen=True)
class MaskSpec:
    n: int
    m: int

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"block size must be >= 2, got {self.n}")
        if not 1 <= self.m <= self.n:
            raise ParameterError(f"retention m={self.m} outside [1, {self.n}]")

    def index_mask(self) -> np.ndarray:
        """Boolean ``n x n`` table, True where ``u >= n-m`` and ``v >= n-m``."""
        keep = np.zeros((self.n, self.n), dtype=bool)
        keep[self.n - self.m :, self.n - self.m :] = True
        return keep


@dataclass(frozen=True)
class FreqImage:
    """Masked coefficient image reassembled to the padded size.

    ``data`` has shape ``1 x H' x W'``. ``source_shape`` is the ``(H, W)`` of
    the image before padding.
    """

    data: np.ndarray
    mode: str
    n: int
    m: int
    source_shape: tuple


def padded_size(size: int, multiple: int) -> int:
    return -(-size // multiple) * multiple


def pad_to_multiple(image: np.ndarray, n: int) -> np.ndarray:
    """Zero pad a ``1 x H x W`` image on the bottom/right to multiples of ``n``."""
    if n < 2:
        raise ParameterError(f"block size must be >= 2, got {n}")
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 1 or min(image.shape[1:]) < 1:
        raise DimensionError(f"expected a 1 x H x W image, got {image.shape}")
    _, h, w = image.shape
    return np.pad(image, ((0, 0), (0, padded_size(h, n) - h), (0, padded_size(w, n) - w)))


def patchify(image: np.ndarray, n: int) -> np.ndarray:
    """Split ``1 x H' x W'`` into ``(H'/n * W'/n) x n x n`` blocks, row-major."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 1:
        raise DimensionError(f"expected a 1 x H x W image, got {image.shape}")
    _, h, w = image.shape
    if h % n or w % n:
        raise DimensionError(f"image {h}x{w} not divisible into {n}x{n} blocks")
    return image.reshape(h // n, n, w // n, n).transpose(0, 2, 1, 3).reshape(-1, n, n)


def unpatchify(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`patchify` for a ``1 x h x w`` target."""
    blocks = np.asarray(blocks)
    if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2]:
        raise DimensionError(f"expected P x n x n blocks, got {blocks.shape}")
    n = blocks.shape[1]
    if h % n or w % n or blocks.shape[0] != (h // n) * (w // n):
        raise DimensionError(f"{blocks.shape[0]} blocks of {n}x{n} do not tile {h}x{w}")
    return blocks.reshape(h // n, w // n, n, n).transpose(0, 2, 1, 3).reshape(1, h, w)


def dct2_naive(patch: np.ndarray) -> np.ndarray:
    """Direct double-sum evaluation of the 2-D DCT-II of one square patch.

    Kept deliberately independent of :class:`DctPlan`; serves as the oracle.
    """
    f = np.asarray(patch, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise DimensionError(f"expected a square patch, got {f.shape}")
    n = f.shape[0]
    idx = np.arange(n)
    out = np.empty((n, n))
    for u in range(n):
        cu = 1 / math.sqrt(2) if u == 0 else 1.0
        cos_x = np.cos((2 * idx + 1) * u * math.pi / (2 * n))
        for v in range(n):
            cv = 1 / math.sqrt(2) if v == 0 else 1.0
            cos_y = np.cos((2 * idx + 1) * v * math.pi / (2 * n))
            out[u, v] = (2.0 / n) * cu * cv * np.sum(f * cos_x[:, None] * cos_y[None, :])
    return out


def dct2_naive_blocks(blocks: np.ndarray) -> np.ndarray:
    """Double-sum DCT of a ``P x n x n`` stack; n**4 multiply-adds per block.

    The cosine table is built from the formula here, not taken from a plan.
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    n = blocks.shape[-1]
    idx = np.arange(n)
    scale = np.where(idx == 0, 1 / math.sqrt(2), 1.0)
    table = scale[:, None] * np.cos((2 * idx[None, :] + 1) * idx[:, None] * math.pi / (2 * n))
    table *= math.sqrt(2.0 / n)
    # optimize=False keeps einsum a literal nested sum over x and y
    return np.einsum("pxy,ux,vy->puv", blocks, table, table, optimize=False)


def _check_plan(arr, plan):
    if arr.shape[-2:] != (plan.n, plan.n):
        raise DimensionError(f"block shape {arr.shape[-2:]} does not match plan n={plan.n}")


def dct2(patch: np.ndarray, plan: DctPlan) -> np.ndarray:
    """Separable 2-D DCT: ``basis @ f @ basis.T``. Accepts one patch or a stack."""
    f = np.asarray(patch, dtype=np.float64)
    _check_plan(f, plan)
    return plan.basis @ f @ plan.basis.T


def idct2(coeffs: np.ndarray, plan: DctPlan) -> np.ndarray:
    F = np.asarray(coeffs, dtype=np.float64)
    _check_plan(F, plan)
    return plan.basis.T @ F @ plan.basis


def retain_high_freq(coeffs: np.ndarray, mask: MaskSpec) -> np.ndarray:
    """Zero every coefficient outside the bottom-right ``m x m`` corner."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-2:] != (mask.n, mask.n):
        raise DimensionError(f"coefficient table {coeffs.shape[-2:]} does not match n={mask.n}")
    return np.where(mask.index_mask(), coeffs, 0.0)


def blockwise_dct(image: np.ndarray, n: int) -> np.ndarray:
    """Pad, split and transform; returns the ``P x n x n`` coefficient stack."""
    plan = DctPlan.create(n)
    return dct2(patchify(pad_to_multiple(image, n), n), plan)


def preprocess(image: np.ndarray, n: int = 8, m: int = 5, mode: str = COEFF) -> FreqImage:
    """Turn a ``1 x H x W`` image in [0, 1] into the masked frequency image."""
    if mode not in MODES:
        raise ParameterError(f"unknown mode {mode!r}, expected one of {MODES}")
    mask = MaskSpec(n, m)
    plan = DctPlan.create(n)
    image = np.asarray(image, dtype=np.float64)
    padded = pad_to_multiple(image, n)
    kept = retain_high_freq(dct2(patchify(padded, n), plan), mask)
    if mode == SPATIAL:
        kept = idct2(kept, plan)
    _, h, w = padded.shape
    return FreqImage(unpatchify(kept, h, w), mode, n, m, tuple(image.shape[1:]))


def retained_energy(image: np.ndarray, n: int, m: int) -> tuple[float, float]:
    """Return ``(kept, total)`` squared-coefficient energy over all blocks."""
    coeffs = blockwise_dct(image, n)
    kept = retain_high_freq(coeffs, MaskSpec(n, m))
    return float(np.sum(kept**2)), float(np.sum(coeffs**2))
