import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mfh.errors import DimensionError, ParameterError
from mfh.freq_transform import (
    COEFF,
    SPATIAL,
    DctPlan,
    MaskSpec,
    blockwise_dct,
    dct2,
    dct2_naive,
    dct2_naive_blocks,
    idct2,
    pad_to_multiple,
    patchify,
    preprocess,
    retain_high_freq,
    retained_energy,
    unpatchify,
)

from oracles import dct2_formula

unit = st.floats(0, 1, allow_nan=False)


@pytest.mark.parametrize("n", [2, 3, 4, 8, 16])
def test_basis_orthonormal(n):
    b = DctPlan.create(n).basis
    assert np.max(np.abs(b @ b.T - np.eye(n))) < 1e-10


def test_plan_rejects_small_n():
    with pytest.raises(ParameterError):
        DctPlan.create(1)


def test_pad_shapes_and_zero_fill(rng):
    img = rng.random((1, 64, 64))
    assert np.array_equal(pad_to_multiple(img, 8), img)
    img = rng.random((1, 100, 250)) + 0.5
    p = pad_to_multiple(img, 8)
    assert p.shape == (1, 104, 256)
    assert np.array_equal(p[:, :100, :250], img)
    assert np.all(p[:, 100:, :] == 0) and np.all(p[:, :, 250:] == 0)
    with pytest.raises(ParameterError):
        pad_to_multiple(img, 1)


def test_patchify_order():
    img = np.zeros((1, 16, 16))
    img[0, :8, :8], img[0, :8, 8:], img[0, 8:, :8], img[0, 8:, 8:] = 1, 2, 3, 4
    p = patchify(img, 8)
    assert p.shape == (4, 8, 8)
    assert [p[i, 0, 0] for i in range(4)] == [1, 2, 3, 4]
    single = np.arange(64.0).reshape(1, 8, 8)
    assert np.array_equal(patchify(single, 8)[0], single[0])


def test_patchify_roundtrip_bit_exact(rng):
    img = rng.random((1, 64, 48))
    assert np.array_equal(unpatchify(patchify(img, 8), 64, 48), img)


def test_patchify_indivisible():
    with pytest.raises(DimensionError):
        patchify(np.zeros((1, 10, 16)), 8)


def test_naive_matches_scalar_formula(rng):
    for n in (2, 3, 8):
        f = rng.random((n, n))
        assert np.max(np.abs(dct2_naive(f) - dct2_formula(f))) < 1e-12


def test_constant_patch_dc_only():
    F = dct2_naive(np.ones((8, 8)))
    assert abs(F[0, 0] - 8) < 1e-10
    F[0, 0] = 0
    assert np.max(np.abs(F)) < 1e-10


def test_impulse_n2():
    F = dct2_naive(np.array([[1.0, 0], [0, 0]]))
    assert np.max(np.abs(F - 0.5)) < 1e-12


def test_dc_scaling_n4():
    plan = DctPlan.create(4)
    F = dct2(np.full((4, 4), 0.3), plan)
    assert abs(F[0, 0] - 1.2) < 1e-12


def test_separable_matches_naive_1000(rng):
    patches = rng.random((1000, 8, 8))
    plan = DctPlan.create(8)
    fast = dct2(patches, plan)
    slow = np.stack([dct2_naive(p) for p in patches])
    assert np.max(np.abs(fast - slow)) < 1e-9
    assert np.max(np.abs(dct2_naive_blocks(patches) - slow)) < 1e-9
    assert np.max(np.abs(idct2(fast, plan) - patches)) < 1e-9


def test_plan_mismatch():
    with pytest.raises(DimensionError):
        dct2(np.zeros((4, 4)), DctPlan.create(8))
    with pytest.raises(DimensionError):
        idct2(np.zeros((4, 4)), DctPlan.create(8))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (8, 8), elements=st.floats(-5, 5)))
def test_parseval(f):
    F = dct2(f, DctPlan.create(8))
    e = np.sum(f**2)
    assert abs(e - np.sum(F**2)) <= 1e-10 * max(e, 1e-300) + 1e-300


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (2, 8, 8), elements=st.floats(-5, 5)), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(fg, a, b):
    plan = DctPlan.create(8)
    f, g = fg
    assert np.max(np.abs(dct2(a * f + b * g, plan) - (a * dct2(f, plan) + b * dct2(g, plan)))) < 1e-9


def test_mask_index_set():
    mask = MaskSpec(8, 5).index_mask()
    kept = {(int(u), int(v)) for u, v in zip(*np.nonzero(mask))}
    assert kept == {(u, v) for u in range(3, 8) for v in range(3, 8)}


@pytest.mark.parametrize("n,m", [(8, 0), (8, 9), (4, -1)])
def test_mask_bounds(n, m):
    with pytest.raises(ParameterError):
        MaskSpec(n, m)


def test_mask_full_is_identity(rng):
    F = rng.normal(size=(5, 8, 8))
    assert np.array_equal(retain_high_freq(F, MaskSpec(8, 8)), F)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 8, 8), elements=st.floats(-5, 5)), st.integers(1, 8))
def test_mask_projection(F, m):
    mask = MaskSpec(8, m)
    once = retain_high_freq(F, mask)
    assert np.array_equal(retain_high_freq(once, mask), once)
    assert np.sum(once**2) <= np.sum(F**2)


def test_mask_size_mismatch():
    with pytest.raises(DimensionError):
        retain_high_freq(np.zeros((4, 4)), MaskSpec(8, 5))


def test_constant_patch_masked_to_zero():
    plan = DctPlan.create(8)
    F = dct2(np.full((8, 8), 0.7), plan)
    for m in range(1, 8):
        assert np.max(np.abs(retain_high_freq(F, MaskSpec(8, m)))) < 1e-15


@pytest.mark.parametrize("mode", [COEFF, SPATIAL])
def test_zero_and_constant_images(mode):
    z = preprocess(np.zeros((1, 20, 30)), 8, 5, mode)
    assert np.all(z.data == 0) and z.data.shape == (1, 24, 32)
    c = preprocess(np.full((1, 32, 32), 0.6), 8, 5, mode)
    assert np.max(np.abs(c.data)) < 1e-12


def test_preprocess_defaults_and_metadata(rng):
    img = rng.random((1, 30, 41))
    fi = preprocess(img)
    assert (fi.n, fi.m, fi.mode) == (8, 5, COEFF)
    assert fi.data.shape == (1, 32, 48)
    assert fi.source_shape == (30, 41)


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_full_retention_spatial_reproduces_padded(rng, n):
    img = rng.random((1, 37, 29))
    fi = preprocess(img, n, n, SPATIAL)
    assert np.max(np.abs(fi.data - pad_to_multiple(img, n))) < 1e-8


def test_coeff_mode_is_blockwise_transform(rng):
    img = rng.random((1, 16, 24))
    fi = preprocess(img, 8, 8, COEFF)
    assert np.array_equal(patchify(fi.data, 8), blockwise_dct(img, 8))


def test_unknown_mode():
    with pytest.raises(ParameterError):
        preprocess(np.zeros((1, 8, 8)), 8, 5, "pixels")


def test_retained_energy_monotone(rng):
    img = rng.random((1, 40, 40))
    fr = [retained_energy(img, 8, m) for m in range(1, 9)]
    kept = [k for k, _ in fr]
    assert all(a <= b for a, b in zip(kept, kept[1:]))
    assert math.isclose(fr[-1][0], fr[-1][1], rel_tol=1e-12)
    assert math.isclose(fr[-1][1], float(np.sum(pad_to_multiple(img, 8) ** 2)), rel_tol=1e-10)
