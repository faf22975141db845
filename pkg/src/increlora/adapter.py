"""SVD-like low-rank update ``delta_w = B diag(lam) A`` stored as rank-1 components.

Every adapter may hold one *reserve* component whose scale is pinned at
``RESERVE_LAMBDA``. Its ``a`` and ``b`` vectors still train (they receive
task and regularizer gradients), so when the allocator activates it the new
direction is already in a useful state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numkernel import DEFAULT_INIT_STD, Rng, gaussian_vector

RESERVE_LAMBDA = 1e-5


class LifecycleError(RuntimeError):
    """Illegal activate/append/mask transition."""


@dataclass(eq=False)
class Component:
    a: np.ndarray
    b: np.ndarray
    lam: np.ndarray  # shape (1,), updated in place by the optimizer
    frozen: bool
    cid: int

    @property
    def value(self) -> float:
        return float(self.lam[0])


@dataclass(eq=False)
class SvdAdapter:
    in_dim: int
    out_dim: int
    name: str = "adapter"
    scale: float = 1.0
    init_std: float = DEFAULT_INIT_STD
    active: list[Component] = field(default_factory=list)
    reserve: Component | None = None
    _next_id: int = 0

    # -- construction -------------------------------------------------------

    def _new_component(self, rng: Rng, lam: float, frozen: bool) -> Component:
        a = gaussian_vector(rng, self.in_dim, self.init_std)
        b = gaussian_vector(rng, self.out_dim, self.init_std)
        comp = Component(a=a, b=b, lam=np.array([lam], dtype=np.float64), frozen=frozen, cid=self._next_id)
        self._next_id += 1
        return comp

    # -- views --------------------------------------------------------------

    @property
    def rank(self) -> int:
        return len(self.active) + (1 if self.reserve is not None else 0)

    def present(self) -> list[Component]:
        comps = list(self.active)
        if self.reserve is not None:
            comps.append(self.reserve)
        return comps

    def stacked(self, include_reserve: bool = True):
        """Return ``(A, Bt, lam)`` with rows ordered active-then-reserve."""
        comps = self.present() if include_reserve else self.active
        if not comps:
            return (np.zeros((0, self.in_dim)), np.zeros((0, self.out_dim)), np.zeros(0))
        A = np.stack([c.a for c in comps])
        Bt = np.stack([c.b for c in comps])
        lam = np.concatenate([c.lam for c in comps])
        return A, Bt, lam

    def delta_w(self) -> np.ndarray:
        A, Bt, lam = self.stacked()
        out = np.zeros((self.out_dim, self.in_dim))
        if lam.size:
            kernels.delta_w(A, Bt, lam, self.scale, out)
        return out

    def path(self, comp: Component, part: str) -> str:
        return f"{self.name}.c{comp.cid}.{part}"

    def trainable(self) -> dict[str, np.ndarray]:
        params = {}
        for c in self.active:
            params[self.path(c, "a")] = c.a
            params[self.path(c, "b")] = c.b
            params[self.path(c, "lam")] = c.lam
        if self.reserve is not None:
            params[self.path(self.reserve, "a")] = self.reserve.a
            params[self.path(self.reserve, "b")] = self.reserve.b
        return params

    def lambdas(self) -> np.ndarray:
        return np.array([c.value for c in self.active])

    # -- gradients ----------------------------------------------------------

    def grads_from_weight_grad(self, G: np.ndarray) -> dict[str, np.ndarray]:
        """Map ``dL/d(delta_w)`` onto every present component's a, b and lam.

        The reserve's ``lam`` gradient is not returned: it is frozen.
        """
        comps = self.present()
        if not comps:
            return {}
        A, Bt, lam = self.stacked()
        gA, gBt, glam = kernels.triplet_grads(G, A, Bt, lam, self.scale)
        grads = {}
        for i, c in enumerate(comps):
            grads[self.path(c, "a")] = gA[i]
            grads[self.path(c, "b")] = gBt[i]
            if not c.frozen:
                grads[self.path(c, "lam")] = glam[i : i + 1]
        return grads

    def regularizer(self) -> tuple[float, dict[str, np.ndarray]]:
        """Orthogonality penalty ``||A A^T - I||^2 + ||B^T B - I||^2`` over present components."""
        comps = self.present()
        if not comps:
            return 0.0, {}
        A, Bt, _ = self.stacked()
        loss, gA, gBt = kernels.gram_penalty(A, Bt)
        grads = {}
        for i, c in enumerate(comps):
            grads[self.path(c, "a")] = gA[i]
            grads[self.path(c, "b")] = gBt[i]
        return loss, grads

    def gram_residual(self) -> float:
        """Regularizer value over the deployed (active) components only."""
        if not self.active:
            return 0.0
        A, Bt, _ = self.stacked(include_reserve=False)
        return kernels.gram_penalty(A, Bt)[0]

    # -- lifecycle ----------------------------------------------------------

    def activate_reserve(self) -> Component:
        if self.reserve is None:
            raise LifecycleError(f"{self.name}: no reserve to activate (allocation phase closed)")
        comp = self.reserve
        comp.frozen = False
        self.active.append(comp)
        self.reserve = None
        return comp

    def append_reserve(self, rng: Rng) -> Component:
        if self.reserve is not None:
            raise LifecycleError(f"{self.name}: reserve already present")
        self.reserve = self._new_component(rng, RESERVE_LAMBDA, frozen=True)
        return self.reserve

    def append_active(self, rng: Rng, lam: float = 0.0) -> Component:
        comp = self._new_component(rng, lam, frozen=False)
        self.active.append(comp)
        return comp

    def mask_reserve(self) -> Component | None:
        comp, self.reserve = self.reserve, None
        return comp

    def grow(self, rng: Rng) -> dict[str, np.ndarray]:
        """Raise the rank by one; return the parameters that need a fresh schedule.

        With a reserve: activate it (its ``lam`` starts training) and append a new
        reserve (its ``a``, ``b`` start advance learning). Without one: append an
        active component with ``lam = 0``.
        """
        if self.reserve is not None:
            old = self.activate_reserve()
            new = self.append_reserve(rng)
            return {
                self.path(old, "lam"): old.lam,
                self.path(new, "a"): new.a,
                self.path(new, "b"): new.b,
            }
        comp = self.append_active(rng)
        return {self.path(comp, p): getattr(comp, p) for p in ("a", "b", "lam")}


def new_adapter(in_dim: int, out_dim: int, rng: Rng, *, name: str = "adapter",
                std: float = DEFAULT_INIT_STD, scale: float = 1.0) -> SvdAdapter:
    """Adapter with no active components and one Gaussian reserve (rank 1)."""
    if in_dim < 1 or out_dim < 1:
        raise ValueError(f"adapter dims must be positive, got in={in_dim} out={out_dim}")
    ad = SvdAdapter(in_dim, out_dim, name=name, scale=scale, init_std=std)
    ad.append_reserve(rng)
    return ad


def plain_adapter(in_dim: int, out_dim: int, rank: int, rng: Rng, *, name: str = "adapter",
                  std: float = DEFAULT_INIT_STD, scale: float = 1.0) -> SvdAdapter:
    """Adapter of ``rank`` active components with ``lam = 0`` and no reserve."""
    if in_dim < 1 or out_dim < 1 or rank < 0:
        raise ValueError(f"bad adapter shape in={in_dim} out={out_dim} rank={rank}")
    ad = SvdAdapter(in_dim, out_dim, name=name, scale=scale, init_std=std)
    for _ in range(rank):
        ad.append_active(rng)
    return ad
