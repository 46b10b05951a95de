import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vvsearch.gridops import convolve, hadamard, max_pool, saturate, vv_union


def naive_correlate(k, b):
    a0, a1 = k.shape
    w0, w1 = a0 // 2, a1 // 2
    n0, n1 = b.shape
    out = np.zeros((n0, n1), dtype=np.int64)
    for x in range(n0):
        for y in range(n1):
            s = 0
            for i in range(-w0, w0 + 1):
                for j in range(-w1, w1 + 1):
                    if 0 <= x + i < n0 and 0 <= y + j < n1:
                        s += int(k[i + w0, j + w1]) * int(b[x + i, y + j])
            out[x, y] = s
    return out


def naive_pool(a, s):
    n0, n1 = a.shape
    m0, m1 = -(-n0 // s), -(-n1 // s)
    out = np.empty((m0, m1), dtype=a.dtype)
    for i in range(m0):
        for j in range(m1):
            out[i, j] = a[i * s:(i + 1) * s, j * s:(j + 1) * s].max()
    return out


class TestConvolve:
    def test_random_against_loops(self, rng):
        for _ in range(120):
            a = 2 * int(rng.integers(0, 4)) + 1
            b = 2 * int(rng.integers(0, 3)) + 1
            k = rng.integers(0, 2, (a, b))
            f = rng.integers(0, 2, (int(rng.integers(1, 12)), int(rng.integers(1, 12))))
            assert np.array_equal(convolve(k, f), naive_correlate(k, f))

    def test_bool_inputs(self, rng):
        k = rng.random((3, 3)) < 0.5
        f = rng.random((6, 5)) < 0.5
        assert np.array_equal(convolve(k, f), naive_correlate(k, f))

    def test_identity_kernel(self, rng):
        f = rng.integers(0, 5, (7, 4))
        k = np.zeros((3, 3), dtype=int)
        k[1, 1] = 1
        assert np.array_equal(convolve(k, f), f)

    def test_offset_direction(self):
        # K[o] * B[x + o]: a kernel hot at +1 in x reads the cell to the right
        k = np.zeros((3, 3), dtype=int)
        k[2, 1] = 1
        f = np.zeros((5, 5), dtype=int)
        f[3, 2] = 1
        out = convolve(k, f)
        assert out[2, 2] == 1 and out.sum() == 1

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            convolve(np.ones((2, 3)), np.ones((4, 4)))


class TestMaxPool:
    def test_random_against_loops(self, rng):
        for _ in range(120):
            a = rng.integers(-5, 5, (int(rng.integers(1, 14)), int(rng.integers(1, 14))))
            s = int(rng.integers(1, 6))
            assert np.array_equal(max_pool(a, s), naive_pool(a, s))

    def test_float_and_bool(self, rng):
        a = rng.random((7, 9)) - 0.5
        assert np.array_equal(max_pool(a, 4), naive_pool(a, 4))
        b = rng.random((7, 9)) < 0.2
        assert np.array_equal(max_pool(b, 3), naive_pool(b, 3))

    def test_example_shape(self):
        assert max_pool(np.zeros((6, 6)), 4).shape == (2, 2)

    @pytest.mark.parametrize("s", [0, -2])
    def test_bad_stride(self, s):
        with pytest.raises(ValueError):
            max_pool(np.zeros((3, 3)), s)


class TestElementwise:
    def test_random_against_loops(self, rng):
        for _ in range(120):
            shape = (int(rng.integers(1, 9)), int(rng.integers(1, 9)))
            a = rng.integers(0, 2, shape)
            b = rng.integers(0, 2, shape)
            h = hadamard(a, b)
            u = vv_union(a, b)
            for i in range(shape[0]):
                for j in range(shape[1]):
                    assert h[i, j] == a[i, j] * b[i, j]
                    assert u[i, j] == min(max(a[i, j] + b[i, j], 0), 1)
            c = rng.integers(-3, 4, shape)
            s = saturate(c)
            for i in range(shape[0]):
                for j in range(shape[1]):
                    assert s[i, j] == min(max(c[i, j], 0), 1)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            hadamard(np.ones((2, 2)), np.ones((2, 3)))
        with pytest.raises(ValueError, match="dimension"):
            vv_union(np.ones((2, 2)), np.ones((3, 2)))


binary = arrays(np.int64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.integers(0, 1))


@settings(max_examples=60, deadline=None)
@given(binary, st.integers(1, 4))
def test_pool_of_union_is_union_of_pools(a, s):
    b = np.roll(a, 1, axis=0)
    assert np.array_equal(max_pool(vv_union(a, b), s), vv_union(max_pool(a, s), max_pool(b, s)))


@settings(max_examples=60, deadline=None)
@given(binary)
def test_saturated_convolution_is_binary(a):
    k = np.ones((3, 3), dtype=np.int64)
    out = saturate(convolve(k, a))
    assert set(np.unique(out)) <= {0, 1}
