"""Incremental rank allocation state machine.

Every ``nu`` steps while the budget is open, the ``h`` modules with the
highest composite importance each grow by one rank. Ranks count each
module's reserve, so the total starts at ``n`` and rises by ``h`` per event
until it reaches ``r_final``; at that point every reserve is masked and the
allocator latches closed.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .scoring import top_h

log = logging.getLogger(__name__)


class Phase(str, enum.Enum):
    ALLOCATING = "allocating"
    CLOSED = "closed"


class BudgetError(ValueError):
    pass


@dataclass
class AllocationEvent:
    step: int
    selected: list[int]
    r_total: int
    ranks: list[int]
    scores: list[float]
    closed: bool = False

    def record(self) -> dict:
        return {"step": self.step, "selected": self.selected, "r_total": self.r_total,
                "ranks": self.ranks, "scores": self.scores}


@dataclass
class AllocatorState:
    n: int
    h: int
    nu: int
    r_final: int
    r_total: int = 0
    phase: Phase = Phase.ALLOCATING
    last_step: int = 0
    events: list[AllocationEvent] = field(default_factory=list)

    @property
    def n_events_total(self) -> int:
        return (self.r_final - self.n) // self.h

    def expected_r_total(self, t: int) -> int:
        return min(self.n + self.h * (t // self.nu), self.r_final)

    def theoretical_rank_cap(self) -> int:
        return self.r_final // self.h

    def _close(self, adapters, on_mask) -> None:
        self.phase = Phase.CLOSED
        for k, ad in enumerate(adapters):
            masked = ad.mask_reserve()
            if masked is not None and on_mask is not None:
                on_mask(k, ad, masked)
        log.info("allocation phase closed at step %d (r_total=%d)", self.last_step, self.r_total)

    def step(self, t: int, scores, adapters: Sequence, rng_for: Callable[[int], object] | None = None,
             on_grow: Callable | None = None, on_mask: Callable | None = None) -> AllocationEvent | None:
        """Advance to step ``t``; maybe run an allocation event.

        ``scores`` is anything with a ``score`` vector (an ``ImportanceState``) or
        a plain sequence. ``adapters`` must expose ``grow(rng)``, ``mask_reserve()``
        and ``rank``. ``on_grow(k, adapter, new_params, t)`` lets the caller register
        fresh parameter groups; ``on_mask(k, adapter, component)`` lets it drop
        optimizer state for masked reserves.
        """
        if t <= self.last_step:
            raise ValueError(f"allocator steps must strictly increase: got {t} after {self.last_step}")
        self.last_step = t
        if self.phase is Phase.CLOSED:
            return None
        if self.r_total >= self.r_final:
            self._close(adapters, on_mask)
            return None
        if t % self.nu != 0:
            return None
        s_hat = np.asarray(getattr(scores, "score", scores), dtype=np.float64)
        selected = top_h(s_hat, self.h)
        for k in selected:
            ad = adapters[k]
            new_params = ad.grow(rng_for(k) if rng_for is not None else None)
            if on_grow is not None:
                on_grow(k, ad, new_params, t)
        self.r_total += self.h
        event = AllocationEvent(t, selected, self.r_total, [int(ad.rank) for ad in adapters],
                                [float(v) for v in s_hat])
        if self.r_total == self.r_final:
            self._close(adapters, on_mask)
            event.closed = True
        self.events.append(event)
        log.debug("event t=%d selected=%s r_total=%d", t, selected, self.r_total)
        return event


def new_allocator(n: int, h: int, nu: int, r_final: int) -> AllocatorState:
    if n < 1:
        raise BudgetError(f"need n >= 1 modules, got {n}")
    if not 1 <= h <= n:
        raise BudgetError(f"h must satisfy 1 <= h <= n={n}, got {h}")
    if nu < 1:
        raise BudgetError(f"nu must be >= 1, got {nu}")
    if r_final < n:
        raise BudgetError(f"r_final={r_final} is below the initial total rank n={n}")
    extra = (r_final - n) % h
    if extra:
        down, up = r_final - extra, r_final - extra + h
        raise BudgetError(
            f"(r_final - n) = {r_final - n} is not divisible by h={h}; "
            f"use r_final={down} or r_final={up}")
    return AllocatorState(n=n, h=h, nu=nu, r_final=r_final, r_total=n)


def theoretical_rank_cap(alloc: AllocatorState) -> int:
    return alloc.theoretical_rank_cap()


class RankCounter:
    """Adapter stand-in that only tracks rank; used to replay event logs."""

    def __init__(self, active: int = 0, has_reserve: bool = True) -> None:
        self.active = active
        self.has_reserve = has_reserve

    @property
    def rank(self) -> int:
        return self.active + int(self.has_reserve)

    def grow(self, rng=None) -> dict:
        self.active += 1
        return {}

    def mask_reserve(self):
        had, self.has_reserve = self.has_reserve, False
        return True if had else None
