import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from increlora.numkernel import (
    Rng,
    ShapeError,
    add,
    frobenius_norm_sq,
    gaussian_fill,
    hadamard,
    matmul,
    outer_product,
    scale,
    transpose,
)


def test_matmul_identity():
    m = np.array([[1.5, -2.0], [0.25, 3.0]])
    assert np.array_equal(matmul(np.eye(2), m), m)


def test_matmul_hand_value():
    out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0], [1.0]]))
    assert out.shape == (2, 1)
    assert np.array_equal(out, np.array([[2.0], [4.0]]))


def test_matmul_mismatch_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


@pytest.mark.parametrize("m, expected", [
    (np.zeros((3, 4)), 0.0),
    (np.eye(3), 3.0),
    (np.array([[1.0, -2.0], [0.0, 3.0]]), 14.0),
])
def test_frobenius_norm_sq(m, expected):
    assert frobenius_norm_sq(m) == expected


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_matmul_associative(p, q, r, s, seed):
    rng = Rng(seed)
    a, b, c = rng.normal((p, q)), rng.normal((q, r)), rng.normal((r, s))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    assert np.linalg.norm(left - right) <= 1e-9 * max(1.0, np.linalg.norm(left))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_frobenius_matches_hadamard_sum(rows, cols, seed):
    m = Rng(seed).normal((rows, cols))
    assert frobenius_norm_sq(m) == pytest.approx(float(np.sum(hadamard(m, m))), rel=1e-14)


def test_gaussian_fill_deterministic():
    a = gaussian_fill(Rng(7), 4, 5, 0.3)
    b = gaussian_fill(Rng(7), 4, 5, 0.3)
    assert a.tobytes() == b.tobytes()
    assert a.dtype == np.float64 and a.flags.c_contiguous


def test_gaussian_fill_streams_differ():
    assert not np.array_equal(gaussian_fill(Rng(7), 3, 3), gaussian_fill(Rng(8), 3, 3))
    assert not np.array_equal(gaussian_fill(Rng(7).child(1), 3, 3), gaussian_fill(Rng(7).child(2), 3, 3))


def test_gaussian_fill_moments():
    std = 0.02
    x = gaussian_fill(Rng(123), 1000, 1000, std)
    assert abs(x.mean()) < 5 * std / 1e3
    assert abs(x.var() / std**2 - 1.0) < 0.02


def test_gaussian_fill_rejects_bad_std():
    with pytest.raises(ValueError):
        gaussian_fill(Rng(0), 2, 2, 0.0)
    with pytest.raises(ValueError):
        gaussian_fill(Rng(0), 2, 2, -1.0)


def test_elementwise_helpers():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(transpose(a), a.T)
    assert np.array_equal(add(a, a), 2 * a)
    assert np.array_equal(scale(a, -0.5), -0.5 * a)
    assert np.array_equal(outer_product(np.array([1.0, 0.0]), np.array([3.0, 4.0])),
                          np.array([[3.0, 4.0], [0.0, 0.0]]))
    with pytest.raises(ShapeError):
        add(a, np.ones((2, 3)))


def test_non_finite_results_rejected():
    with pytest.raises(FloatingPointError):
        scale(np.array([[1e308]]), 10.0)
