"""Backend selection for the hot kernels.

The compiled core (``_ckernels``) is used when it was built; otherwise the
numpy fallback is used. ``use_backend`` switches at runtime, which the
benchmark and the backend-equivalence tests rely on.

The compiled loops win on the small adapters a training step touches but
lose to BLAS once a product gets large, so the "compiled" backend sends the
three matrix-product kernels to numpy past ``BLAS_CUTOVER`` multiply-adds.
"""

from __future__ import annotations

import logging
from types import SimpleNamespace

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BLAS_CUTOVER = 8192


def _hybrid(c, py) -> SimpleNamespace:
    def delta_w(A, Bt, lam, scale, out):
        if A.shape[0] * A.shape[1] * Bt.shape[1] > BLAS_CUTOVER:
            return py.delta_w(A, Bt, lam, scale, out)
        return c.delta_w(A, Bt, lam, scale, out)

    def triplet_grads(G, A, Bt, lam, scale):
        if A.shape[0] * A.shape[1] * Bt.shape[1] > BLAS_CUTOVER:
            return py.triplet_grads(G, A, Bt, lam, scale)
        return c.triplet_grads(G, A, Bt, lam, scale)

    def gram_penalty(A, Bt):
        if A.shape[0] ** 2 * (A.shape[1] + Bt.shape[1]) > BLAS_CUTOVER:
            return py.gram_penalty(A, Bt)
        return c.gram_penalty(A, Bt)

    return SimpleNamespace(delta_w=delta_w, triplet_grads=triplet_grads, gram_penalty=gram_penalty,
                           adamw_update=c.adamw_update, abs_mean_product=c.abs_mean_product)


BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _hybrid(_ckernels, _pykernels)

_active = "compiled" if _ckernels is not None else "python"
log.debug("kernel backend: %s", _active)

delta_w = BACKENDS[_active].delta_w
triplet_grads = BACKENDS[_active].triplet_grads
gram_penalty = BACKENDS[_active].gram_penalty
adamw_update = BACKENDS[_active].adamw_update
abs_mean_product = BACKENDS[_active].abs_mean_product


def available_backends() -> list[str]:
    return list(BACKENDS)


def active_backend() -> str:
    return _active


def use_backend(name: str) -> None:
    global _active, delta_w, triplet_grads, gram_penalty, adamw_update, abs_mean_product
    if name not in BACKENDS:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; have {available_backends()}")
    mod = BACKENDS[name]
    _active = name
    delta_w = mod.delta_w
    triplet_grads = mod.triplet_grads
    gram_penalty = mod.gram_penalty
    adamw_update = mod.adamw_update
    abs_mean_product = mod.abs_mean_product
