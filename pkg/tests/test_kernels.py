import numpy as np
import pytest

from increlora import _pykernels, kernels
from increlora.numkernel import Rng

compiled = pytest.mark.skipif("compiled" not in kernels.available_backends(),
                              reason="compiled core not built")


def _operands(seed, r=4, n_in=7, n_out=5):
    rng = Rng(seed)
    return (rng.normal((r, n_in)), rng.normal((r, n_out)), rng.normal(r), rng.normal((n_out, n_in)))


def test_fallback_always_available():
    assert "python" in kernels.available_backends()


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_delta_w_matches_explicit_sum(backend):
    A, Bt, lam, _ = _operands(0)
    out = np.empty((5, 7))
    kernels.delta_w(A, Bt, lam, 0.5, out)
    ref = sum(0.5 * lam[i] * np.outer(Bt[i], A[i]) for i in range(4))
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-13)


def test_triplet_grads_match_matrix_form(backend):
    A, Bt, lam, G = _operands(1)
    gA, gBt, glam = kernels.triplet_grads(G, A, Bt, lam, 1.0)
    np.testing.assert_allclose(glam, np.diag(Bt @ G @ A.T), atol=1e-13)
    np.testing.assert_allclose(gA, lam[:, None] * (Bt @ G), atol=1e-13)
    np.testing.assert_allclose(gBt, lam[:, None] * (A @ G.T), atol=1e-13)


def test_gram_penalty_value(backend):
    A, Bt, _, _ = _operands(2)
    loss, gA, gBt = kernels.gram_penalty(A, Bt)
    P = A @ A.T - np.eye(4)
    Q = Bt @ Bt.T - np.eye(4)
    assert loss == pytest.approx(np.sum(P**2) + np.sum(Q**2), rel=1e-13)
    np.testing.assert_allclose(gA, 4 * P @ A, atol=1e-12)
    np.testing.assert_allclose(gBt, 4 * Q @ Bt, atol=1e-12)


def test_abs_mean_product(backend):
    x = np.array([[1.0, -2.0], [0.0, 3.0]])
    g = np.array([[2.0, 1.0], [4.0, -1.0]])
    assert kernels.abs_mean_product(x, g) == 1.75


@compiled
@pytest.mark.parametrize("seed", range(5))
def test_backends_agree(seed):
    from increlora import _ckernels

    A, Bt, lam, G = _operands(seed, r=seed + 1)
    o1, o2 = np.empty(G.shape), np.empty(G.shape)
    np.testing.assert_allclose(_pykernels.delta_w(A, Bt, lam, 1.0, o1), _ckernels.delta_w(A, Bt, lam, 1.0, o2),
                               atol=1e-12)
    for x, y in zip(_pykernels.triplet_grads(G, A, Bt, lam, 1.0), _ckernels.triplet_grads(G, A, Bt, lam, 1.0)):
        np.testing.assert_allclose(x, y, atol=1e-12)
    lp, ap, bp = _pykernels.gram_penalty(A, Bt)
    lc, ac, bc = _ckernels.gram_penalty(A, Bt)
    assert lp == pytest.approx(lc, rel=1e-12)
    np.testing.assert_allclose(ap, ac, atol=1e-11)
    np.testing.assert_allclose(bp, bc, atol=1e-11)

    p1, g = Rng(seed).normal(6), Rng(seed + 1).normal(6)
    p2 = p1.copy()
    m1, v1, m2, v2 = (np.zeros(6) for _ in range(4))
    for step in range(1, 4):
        _pykernels.adamw_update(p1, g, m1, v1, 1e-2, 0.9, 0.999, 1e-8, 0.1, step)
        _ckernels.adamw_update(p2, g, m2, v2, 1e-2, 0.9, 0.999, 1e-8, 0.1, step)
    np.testing.assert_allclose(p1, p2, rtol=0, atol=1e-15)
