import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mfh import tensor_core as tc
from mfh.errors import DimensionError, ParameterError

from oracles import conv2d_loops, matmul_loops

finite = st.floats(-10, 10, allow_nan=False)


def test_matmul_identity(rng):
    x = rng.normal(size=(3, 3))
    assert np.array_equal(tc.matmul(np.eye(3), x), x)


def test_matmul_hand_case():
    assert tc.matmul([[1, 2], [3, 4]], [[0], [1]]).tolist() == [[2], [4]]


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    assert np.max(np.abs(tc.matmul(a, b) - matmul_loops(a, b))) < 1e-12


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        tc.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associative(rng):
    for _ in range(20):
        a, b, c = rng.normal(size=(4, 5)), rng.normal(size=(5, 6)), rng.normal(size=(6, 3))
        assert np.allclose(tc.matmul(tc.matmul(a, b), c), tc.matmul(a, tc.matmul(b, c)), rtol=0, atol=1e-9)


def test_conv_unit_kernel(rng):
    x = rng.normal(size=(1, 5, 6))
    assert np.array_equal(tc.conv2d(x, np.ones((1, 1, 1, 1))), x)


def test_conv_sum_pooling():
    out = tc.conv2d(np.array([[[1.0, 2], [3, 4]]]), np.ones((1, 1, 2, 2)), stride=2)
    assert out.tolist() == [[[10.0]]]


@pytest.mark.parametrize("stride,padding,k", [(1, 0, 3), (2, 1, 3), (1, 1, 3), (4, 0, 4), (2, 0, 1)])
def test_conv_matches_loops(rng, stride, padding, k):
    x = rng.normal(size=(3, 9, 8))
    w = rng.normal(size=(4, 3, k, k))
    b = rng.normal(size=4)
    assert np.max(np.abs(tc.conv2d(x, w, b, stride, padding) - conv2d_loops(x, w, b, stride, padding))) < 1e-10


@pytest.mark.parametrize("k", [1, 3, 5])
def test_conv_centred_identity_kernel_exact(rng, k):
    x = rng.normal(size=(2, 7, 7))
    w = np.zeros((2, 2, k, k))
    w[0, 0, k // 2, k // 2] = w[1, 1, k // 2, k // 2] = 1
    assert np.array_equal(tc.conv2d(x, w, stride=1, padding=(k - 1) // 2), x)


def test_conv_kernel_too_large():
    with pytest.raises(DimensionError):
        tc.conv2d(np.ones((1, 2, 2)), np.ones((1, 1, 3, 3)))


def test_conv_channel_mismatch():
    with pytest.raises(DimensionError):
        tc.conv2d(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)))


def test_global_avg_pool_cases(rng):
    assert np.all(tc.global_avg_pool(np.full((3, 4, 5), 7.0)) == 7)
    x = rng.normal(size=(4, 1, 1))
    assert np.array_equal(tc.global_avg_pool(x), x[:, 0, 0])
    x = rng.normal(size=(3, 4, 5))
    loop = [sum(x[c, i, j] for i in range(4) for j in range(5)) / 20 for c in range(3)]
    assert np.max(np.abs(tc.global_avg_pool(x) - loop)) < 1e-12


def test_layer_norm_constant_token():
    out = tc.layer_norm(np.full((3, 6), 2.5), np.ones(6) * 3, np.zeros(6))
    assert np.array_equal(out, np.zeros((3, 6)))


def test_layer_norm_unit_token():
    out = tc.layer_norm(np.array([1.0, -1.0]), np.ones(2), np.zeros(2))
    assert np.allclose(out, [1, -1], atol=1e-5)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 9), elements=finite))
def test_layer_norm_moments(x):
    out = tc.layer_norm(x, np.ones(9), np.zeros(9))
    # output variance is var / (var + eps), within 1e-5 of 1 once var >= 1
    ok = x.var(axis=-1) >= 1.0
    assert np.all(np.abs(out.mean(axis=-1)[ok]) < 1e-10)
    assert np.all(np.abs(out.var(axis=-1)[ok] - 1) <= 1e-5)


def test_layer_norm_errors():
    with pytest.raises(DimensionError):
        tc.layer_norm(np.ones((2, 0)), np.ones(0), np.zeros(0))
    with pytest.raises(DimensionError):
        tc.layer_norm(np.ones((2, 3)), np.ones(2), np.zeros(3))


def test_avg_pool_ceil_mode():
    x = np.arange(9.0).reshape(1, 3, 3)
    out = tc.avg_pool(x, 2)
    assert out.shape == (1, 2, 2)
    assert out[0, 0, 0] == (0 + 1 + 3 + 4) / 4
    assert out[0, 1, 1] == 8 / 4
    with pytest.raises(ParameterError):
        tc.avg_pool(x, 0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5,), elements=st.floats(-800, 800)))
def test_sigmoid_open_interval_and_symmetric(x):
    s = tc.sigmoid(x)
    assert np.all((s >= 0) & (s <= 1)) and np.all(np.isfinite(s))
    assert np.allclose(s + tc.sigmoid(-x), 1.0, atol=1e-15)


def test_gelu_grad_matches_difference():
    x = np.linspace(-4, 4, 41)
    num = (tc.gelu(x + 1e-6) - tc.gelu(x - 1e-6)) / 2e-6
    assert np.max(np.abs(num - tc.gelu_grad(x))) < 1e-8


def test_ops_bit_deterministic(rng):
    x = rng.normal(size=(3, 10, 10))
    w = rng.normal(size=(4, 3, 3, 3))
    assert np.array_equal(tc.conv2d(x, w, None, 2, 1), tc.conv2d(x.copy(), w.copy(), None, 2, 1))
