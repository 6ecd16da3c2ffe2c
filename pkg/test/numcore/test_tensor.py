import warnings

warnings.simplefilter('ignore')

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etlnet.errors import ArgumentError, ContractViolationError, DimensionError
from etlnet.numcore import EwiseOp, Precision, Rng, as_tensor, ewise, matmul, sigmoid
from test.utils import gen_random_tensor


def _triple_loop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += float(a[i, p]) * float(b[p, j])
    return out


def test_matmul_identity():
    a = np.array([[1., 2.], [3., 4.]])
    assert np.array_equal(matmul(np.eye(2), a), a)


def test_matmul_example():
    result = matmul(np.array([[1., 2.], [3., 4.]]), np.array([[5.], [6.]]))
    assert np.array_equal(result, np.array([[17.], [39.]]))


def test_matmul_against_loop():
    a = gen_random_tensor((7, 5), seed=1)
    b = gen_random_tensor((5, 3), seed=2)
    assert np.max(np.abs(matmul(a, b) - _triple_loop(a, b))) < 1e-12
    a32, b32 = a.astype(np.float32), b.astype(np.float32)
    assert np.max(np.abs(matmul(a32, b32) - _triple_loop(a32, b32))) < 1e-5


def test_matmul_shape_mismatch_names_shapes():
    with pytest.raises(DimensionError) as e:
        matmul(np.zeros((2, 3)), np.zeros((4, 2)))
    assert "(2, 3)" in str(e.value) and "(4, 2)" in str(e.value)


def test_matmul_non_finite():
    with pytest.raises(ContractViolationError):
        matmul(np.array([[np.inf]]), np.array([[0.]]))


def test_ewise_examples():
    x = np.array([1., 2., 3.])
    assert np.array_equal(ewise("add", x, 0.), x)
    assert np.array_equal(ewise(EwiseOp.MUL, x, 2.), np.array([2., 4., 6.]))
    assert np.array_equal(ewise("sub", x, x), np.zeros(3))
    assert ewise("map", np.array([0.]), sigmoid)[0] == 0.5


def test_ewise_rejects_broadcasting():
    with pytest.raises(DimensionError):
        ewise("add", np.zeros((2, 3)), np.zeros(3))
    with pytest.raises(ArgumentError):
        ewise("map", np.zeros(2), 1.)
    with pytest.raises(ArgumentError):
        ewise("pow", np.zeros(2), 1.)


def test_ewise_keeps_dtype():
    x = as_tensor([1., 2.], Precision.STANDARD)
    assert ewise("mul", x, 3.).dtype == np.float32


def test_sigmoid_is_stable():
    values = sigmoid(np.array([-1000., 0., 1000.]))
    assert np.all(np.isfinite(values))
    assert values[0] == 0. and values[1] == 0.5 and values[2] == 1.


def test_precision():
    assert Precision.from_val("standard").dtype == np.float32
    assert Precision.from_val(Precision.EXTENDED).dtype == np.float64
    with pytest.raises(ArgumentError):
        Precision.from_val("half")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 32))
def test_matmul_shape(m, k, n, seed):
    a = Rng(seed).normal((m, k))
    b = Rng(seed + 1).normal((k, n))
    assert matmul(a, b).shape == (m, n)
