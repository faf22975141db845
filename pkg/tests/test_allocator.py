import numpy as np
import pytest

from increlora.adapter import new_adapter
from increlora.allocator import BudgetError, Phase, RankCounter, new_allocator
from increlora.numkernel import Rng


def _counters(n):
    return [RankCounter() for _ in range(n)]


def test_divisibility_error_suggests_both_neighbours():
    with pytest.raises(BudgetError, match="r_final=10 or r_final=12"):
        new_allocator(4, 2, 5, 11)


@pytest.mark.parametrize("args", [(0, 1, 1, 1), (3, 0, 1, 3), (3, 4, 1, 7), (3, 1, 0, 4), (3, 1, 1, 2)])
def test_bad_budgets_rejected(args):
    with pytest.raises(BudgetError):
        new_allocator(*args)


def test_no_events_when_budget_is_n():
    alloc = new_allocator(3, 1, 5, 3)
    ads = _counters(3)
    assert alloc.step(1, [1.0, 2.0, 3.0], ads) is None
    assert alloc.phase is Phase.CLOSED
    assert [a.rank for a in ads] == [0, 0, 0]


def test_event_schedule_and_close():
    alloc = new_allocator(3, 1, 2, 5)
    ads = _counters(3)
    events = []
    for t in range(1, 9):
        ev = alloc.step(t, [0.1, 0.9, 0.5], ads)
        if ev:
            events.append(ev)
        assert alloc.r_total == alloc.expected_r_total(t)
    assert [e.step for e in events] == [2, 4]
    assert [e.selected for e in events] == [[1], [1]]
    assert events[-1].closed and alloc.phase is Phase.CLOSED
    # ranks recorded before masking, reserves dropped after
    assert events[-1].ranks == [1, 3, 1]
    assert [a.rank for a in ads] == [0, 2, 0]
    assert alloc.theoretical_rank_cap() == 5


def test_steps_must_increase():
    alloc = new_allocator(2, 1, 2, 4)
    alloc.step(3, [0, 0], _counters(2))
    with pytest.raises(ValueError):
        alloc.step(3, [0, 0], _counters(2))


def test_callbacks_fire_with_new_params():
    alloc = new_allocator(2, 1, 1, 3)
    ads = [new_adapter(2, 2, Rng(k), name=f"m{k}") for k in range(2)]
    grown, masked = [], []
    alloc.step(1, [0.0, 1.0], ads, rng_for=lambda k: Rng(9, k),
               on_grow=lambda k, ad, params, t: grown.append((k, sorted(params), t)),
               on_mask=lambda k, ad, comp: masked.append(k))
    assert grown == [(1, ["m1.c0.lam", "m1.c1.a", "m1.c1.b"], 1)]
    assert masked == [0, 1]
    assert all(ad.reserve is None for ad in ads)


@pytest.mark.parametrize("seed", range(20))
def test_budget_linearity_randomized(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    h = int(rng.integers(1, n + 1))
    nu = int(rng.integers(1, 6))
    n_events = int(rng.integers(0, 6))
    alloc = new_allocator(n, h, nu, n + h * n_events)
    ads = _counters(n)
    for t in range(1, nu * (n_events + 2) + 1):
        open_before = alloc.phase is Phase.ALLOCATING
        alloc.step(t, rng.random(n), ads)
        if open_before:
            assert alloc.r_total == n + h * (t // nu) or alloc.r_total == alloc.r_final
        if alloc.phase is Phase.ALLOCATING:
            assert sum(a.rank for a in ads) == n + h * (t // nu)
    assert alloc.phase is Phase.CLOSED
    assert sum(a.rank for a in ads) == alloc.r_final - n
    assert len(alloc.events) == n_events
