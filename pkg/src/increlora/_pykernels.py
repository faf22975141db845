"""Pure numpy implementations of the hot per-step kernels.

Layout conventions shared with the compiled core: ``A`` is r x in (rows are
``a_i``), ``Bt`` is r x out (rows are ``b_i``), ``lam`` has length r.
"""

import numpy as np


def delta_w(A, Bt, lam, scale, out):
    """Write ``scale * sum_i lam_i b_i a_i^T`` into ``out`` (out_dim x in_dim)."""
    np.matmul(Bt.T * (scale * lam), A, out=out)
    return out


def triplet_grads(G, A, Bt, lam, scale):
    # u_i = G a_i, v_i = b_i^T G
    U = A @ G.T  # r x out
    V = Bt @ G  # r x in
    glam = scale * np.einsum("ij,ij->i", Bt, U)
    gA = (scale * lam)[:, None] * V
    gBt = (scale * lam)[:, None] * U
    return gA, gBt, glam


def gram_penalty(A, Bt):
    r = A.shape[0]
    eye = np.eye(r)
    P = A @ A.T - eye
    Q = Bt @ Bt.T - eye
    loss = float(np.sum(P * P) + np.sum(Q * Q))
    return loss, 4.0 * (P @ A), 4.0 * (Q @ Bt)


def adamw_update(p, g, m, v, lr, beta1, beta2, eps, weight_decay, step):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    upd = (m / bc1) / (np.sqrt(v / bc2) + eps)
    if weight_decay != 0.0:
        upd += weight_decay * p
    p -= lr * upd


def abs_mean_product(X, Y):
    return float(np.mean(np.abs(X * Y)))
