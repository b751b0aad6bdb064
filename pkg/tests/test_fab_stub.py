import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfh.errors import DimensionError, ParameterError
from mfh.extractor import ExtractorConfig, ExtractorParams, extractor_forward
from mfh.fab import ADD, ALL_VARIANTS, CONCAT, UNIT, FabParams, FabVariant, attention_map, fab_forward, fab_variants
from mfh.freq_transform import pad_to_multiple
from mfh.spatial_stub import StubParams, stub_forward, stub_stages

from oracles import sigmoid_scalar


def kt(rng, c=4, h=3, w=5):
    return rng.normal(size=(c, h, w)), rng.normal(size=(c, h, w))


def test_variant_parse():
    assert FabVariant.parse("add+unit") == FabVariant(ADD, UNIT)
    assert str(FabVariant()) == "concat+learnable"
    assert len(set(ALL_VARIANTS)) == 4
    for bad in ("concat", "mul+unit", "concat+zero"):
        with pytest.raises(ParameterError):
            FabVariant.parse(bad)


def test_degenerate_is_sum(rng):
    K, T = kt(rng)
    p = FabParams.init(4)
    p.conv_w[:] = 0
    p.conv_b[:] = 40.0
    assert np.max(np.abs(fab_forward(K, T, p) - (K + T))) < 1e-6


def test_zero_vk_drops_k(rng):
    K, T = kt(rng)
    p = FabParams.init(4, seed=3)
    p.v_k[:] = 0
    p.v_t[:] = rng.normal(size=4)
    A = attention_map(K, T, p)
    assert np.array_equal(fab_forward(K, T, p), A[1] * T * p.v_t[:, None, None])


def test_fab_loop_oracle(rng):
    c, h, w = 3, 4, 3
    K, T = kt(rng, c, h, w)
    p = FabParams(rng.normal(size=(2, 2 * c, 3, 3)), rng.normal(size=2), rng.normal(size=c), rng.normal(size=c))
    X = np.concatenate([K, T])
    out = fab_forward(K, T, p)
    for i in range(h):
        for j in range(w):
            a = []
            for o in range(2):
                s = p.conv_b[o]
                for ch in range(2 * c):
                    for di in range(3):
                        for dj in range(3):
                            y, x = i + di - 1, j + dj - 1
                            if 0 <= y < h and 0 <= x < w:
                                s += p.conv_w[o, ch, di, dj] * X[ch, y, x]
                a.append(sigmoid_scalar(s))
            for ch in range(c):
                ref = a[0] * K[ch, i, j] * p.v_k[ch] + a[1] * T[ch, i, j] * p.v_t[ch]
                assert abs(out[ch, i, j] - ref) < 1e-10


def test_fab_zero_inputs_exact():
    p = FabParams.init(4, seed=1)
    p.conv_b[:] = [0.3, -2]
    assert np.array_equal(fab_forward(np.zeros((4, 2, 2)), np.zeros((4, 2, 2)), p), np.zeros((4, 2, 2)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(ALL_VARIANTS))
def test_attention_bounds_and_shape(seed, variant):
    r = np.random.default_rng(seed)
    K, T = kt(r)
    p = FabParams.init(4, variant, seed)
    A = attention_map(K * 5, T * 5, p)
    assert A.shape == (2, 3, 5) and np.all((A > 0) & (A < 1))
    assert fab_forward(K, T, p).shape == K.shape


@pytest.mark.parametrize("alpha,tol", [(2.0, 1e-12), (2.5, 1e-12), (-0.75, 1e-12)])
def test_bilinear_in_k_with_frozen_attention(rng, alpha, tol):
    K, T = kt(rng)
    p = FabParams.init(4, seed=2)
    # zero conv weights freeze A at sigmoid(bias) whatever K is
    p.conv_w[:] = 0
    p.conv_b[:] = [0.4, -1.1]
    p.v_k[:] = rng.normal(size=4)
    p.v_t[:] = rng.normal(size=4)
    t_term = fab_forward(np.zeros_like(K), T, p)
    k_term = fab_forward(K, T, p) - t_term
    scaled = fab_forward(alpha * K, T, p) - t_term
    assert np.max(np.abs(scaled - alpha * k_term)) <= tol
    # power-of-two scaling of both streams is exact in floating point
    assert np.array_equal(fab_forward(4 * K, 4 * T, p), 4 * fab_forward(K, T, p))


def test_shape_mismatch(rng):
    p = FabParams.init(4)
    with pytest.raises(DimensionError):
        fab_forward(np.zeros((4, 2, 2)), np.zeros((4, 2, 3)), p)
    with pytest.raises(DimensionError):
        fab_forward(np.zeros((3, 2, 2)), np.zeros((3, 2, 2)), p)


def test_variants_dispatch(rng):
    K, T = kt(rng)
    p = FabParams.init(4, seed=5)
    p.v_k[:] = rng.normal(size=4)
    assert np.array_equal(fab_variants(K, T, p, "concat+learnable"), fab_forward(K, T, p))
    unit = fab_variants(K, T, p, "concat+unit")
    A = attention_map(K, T, p)
    assert np.array_equal(unit, A[0] * K + A[1] * T)
    pa = FabParams.init(4, FabVariant(ADD, "learnable"), 5)
    assert pa.conv_w.shape == (2, 4, 3, 3)
    assert fab_variants(K, T, pa, FabVariant(ADD, UNIT)).shape == K.shape
    with pytest.raises(DimensionError):
        fab_variants(K, T, pa, "concat+learnable")
    with pytest.raises(ParameterError):
        fab_variants(K, T, p, "sum+unit")
    with pytest.raises(ParameterError):
        fab_variants(K, T, p, 3)


def test_fab_named_roundtrip():
    p = FabParams.init(4, seed=9)
    q = FabParams.from_named(p.named())
    assert np.array_equal(q.conv_w, p.conv_w) and q.variant == p.variant
    with pytest.raises(DimensionError):
        FabParams.from_named(p.named(), FabVariant(ADD, UNIT))


def test_stub_zero_and_shape():
    p = StubParams.init(256, 0)
    assert stub_forward(np.zeros((1, 64, 64)), p).shape == (256, 4, 4)
    assert np.all(stub_forward(np.zeros((1, 64, 64)), p) == 0)


def test_stub_relu_nonnegative(rng):
    acts = stub_stages(rng.normal(size=(1, 32, 48)), StubParams.init(8, 1))
    assert [a.shape for a in acts] == [(1, 32, 48), (16, 16, 24), (32, 8, 12), (64, 4, 6), (8, 2, 3)]
    assert all(np.all(a >= 0) for a in acts[1:])


def test_stub_rejects_multichannel():
    with pytest.raises(DimensionError):
        stub_forward(np.zeros((2, 16, 16)), StubParams.init(8))


def test_stream_shapes_agree_50_sizes():
    r = np.random.default_rng(0)
    cfg = ExtractorConfig(channels=8, num_blocks=1, reduction=4)
    ep = ExtractorParams.init(cfg, 0)
    sp = StubParams.init(8, 0)
    fp = FabParams.init(8)
    for _ in range(50):
        h, w = (int(v) for v in r.integers(1, 120, size=2))
        img = pad_to_multiple(r.random((1, h, w)), 16)
        K, T = extractor_forward(img, ep), stub_forward(img, sp)
        assert K.shape == T.shape == (8, -(-h // 16), -(-w // 16))
        assert fab_forward(K, T, fp).shape == K.shape
