"""Dense float64 matrices and the small set of primitives built on them.

A ``DenseMatrix`` is simply a C-contiguous ``numpy.ndarray`` of dtype
float64 with two dimensions. Vectors are carried as 1-D float64 arrays and
promoted where a matrix is needed (``a_i`` as 1 x in, ``b_i`` as out x 1).
"""

from __future__ import annotations

import numpy as np

DenseMatrix = np.ndarray

DEFAULT_INIT_STD = 0.02


class ShapeError(ValueError):
    """Raised when operands are not conformable."""


class Rng:
    """Seeded counter-based generator (Philox) threaded explicitly by callers.

    ``child(*keys)`` derives an independent stream from the seed plus a key
    path, so unrelated consumers never share draws.
    """

    def __init__(self, seed: int, *keys: int) -> None:
        self.seed = int(seed)
        self.keys = tuple(int(k) for k in keys)
        ss = np.random.SeedSequence([self.seed, *self.keys])
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, *keys: int) -> "Rng":
        return Rng(self.seed, *self.keys, *keys)

    def normal(self, size, std: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, std, size=size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> DenseMatrix:
    m = np.ascontiguousarray(data, dtype=np.float64)
    if m.ndim == 1 and rows is not None and cols is not None:
        m = m.reshape(rows, cols)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def _check_finite(m: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(m).all():
        raise FloatingPointError(f"{op} produced non-finite entries")
    return m


def matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return _check_finite(np.ascontiguousarray(a @ b), "matmul")


def transpose(m: DenseMatrix) -> DenseMatrix:
    return np.ascontiguousarray(m.T)


def _same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op} shape mismatch: {a.shape} vs {b.shape}")


def add(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    _same_shape(a, b, "add")
    return _check_finite(a + b, "add")


def scale(m: DenseMatrix, c: float) -> DenseMatrix:
    return _check_finite(m * float(c), "scale")


def hadamard(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    _same_shape(a, b, "hadamard")
    return _check_finite(a * b, "hadamard")


def outer_product(b: np.ndarray, a: np.ndarray) -> DenseMatrix:
    """Rank-1 matrix ``b a^T`` of shape (len(b), len(a))."""
    return _check_finite(np.outer(np.ravel(b), np.ravel(a)), "outer_product")


def frobenius_norm_sq(m: DenseMatrix) -> float:
    return float(np.sum(m * m))


def gaussian_fill(rng: Rng, rows: int, cols: int, std: float = DEFAULT_INIT_STD) -> DenseMatrix:
    if not std > 0:
        raise ValueError(f"gaussian_fill needs std > 0, got {std}")
    if rows < 1 or cols < 1:
        raise ShapeError(f"gaussian_fill needs positive shape, got ({rows}, {cols})")
    return rng.normal((rows, cols), std)


def gaussian_vector(rng: Rng, n: int, std: float = DEFAULT_INIT_STD) -> np.ndarray:
    return gaussian_fill(rng, 1, n, std)[0].copy()
