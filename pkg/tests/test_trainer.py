import math

import numpy as np
import pytest

from increlora.allocator import Phase
from increlora.config import from_dict
from increlora.trainer import TrainingDiverged, evaluate, train

TASK = {"dims": [6, 8, 8, 4], "planted_ranks": [1, 3, 2], "activation": "tanh"}


def _cfg(**kw):
    base = {"task": dict(TASK), "total_steps": 300, "warmup": 10, "nu": 20, "h": 2, "r_final": 11}
    base.update(kw)
    return from_dict(base)


def test_single_module_sanity_fixture():
    cfg = from_dict({"task": {"dims": [8, 8], "planted_ranks": [3], "activation": "identity"},
                     "total_steps": 3000, "warmup": 50, "nu": 100, "h": 1, "r_final": 4,
                     "regu_weight": 0.0, "base_lr": 0.02})
    res = train(cfg)
    err = res.net.adapters[0].delta_w() - res.task.planted[0]
    assert np.mean(err**2) < 1e-3
    assert res.final_eval < 1e-3


def test_full_run_closes_with_deployed_budget():
    cfg = _cfg()
    res = train(cfg, check_invariants=True)
    assert res.allocator.phase is Phase.CLOSED
    assert sum(res.deployed_ranks()) == cfg.r_final - cfg.n_modules
    assert all(ad.reserve is None for ad in res.net.adapters)
    assert len(res.events) == (cfg.r_final - cfg.n_modules) // cfg.h
    assert res.closed_at == res.events[-1].step


def test_loss_decomposition_every_step():
    cfg = _cfg()
    for m in train(cfg).metrics:
        assert abs(m["total_loss"] - (m["task_loss"] + cfg.regu_weight * m["regu_loss"])) <= 1e-12


def test_identical_seeds_identical_metrics():
    a, b = train(_cfg()), train(_cfg())
    assert a.metrics == b.metrics
    assert [e.record() for e in a.events] == [e.record() for e in b.events]
    assert a.final.to_bytes() == b.final.to_bytes()


def test_fixed_lora_has_no_events_or_reserves():
    cfg = _cfg(mode="fixed_lora", lora_rank=2)
    res = train(cfg, check_invariants=True)
    assert res.events == [] and res.allocator is None
    assert res.deployed_ranks() == [2, 2, 2]
    assert all(ad.reserve is None for ad in res.net.adapters)
    assert {m["r_total"] for m in res.metrics} == {6}


def test_no_advance_ablation_counts():
    cfg = _cfg(advance_learning=False)
    res = train(cfg, check_invariants=True)
    assert sum(res.deployed_ranks()) == cfg.r_final
    assert all(ad.reserve is None for ad in res.net.adapters)


def test_evaluate_checkpoint_matches_final_eval():
    cfg = _cfg()
    res = train(cfg)
    assert evaluate(res.final, cfg) == res.final_eval
    assert res.best_eval <= res.final_eval
    assert evaluate(res.best, cfg) == res.best_eval


def test_classification_reports_accuracy():
    cfg = _cfg(task={**TASK, "kind": "classification"}, total_steps=200, r_final=7)
    res = train(cfg)
    assert 0.0 <= res.final_eval <= 1.0
    assert res.best_eval >= res.final_eval


def test_restart_warmup_births():
    cfg = _cfg()
    res = train(cfg)
    births = [g.birth_step for g in res.optimizer.groups]
    assert births == [0] + [e.step for e in res.events for _ in e.selected]
    res = train(_cfg(restart_warmup=False))
    assert {g.birth_step for g in res.optimizer.groups} == {0}


def test_eval_cadence():
    res = train(_cfg(eval_every=50))
    evals = [m["step"] for m in res.metrics if m["eval"] is not None]
    assert evals == [50, 100, 150, 200, 250, 300]


def test_divergence_carries_event_log():
    cfg = _cfg(task={**TASK, "planted_scale": 1e200})
    with pytest.raises(TrainingDiverged) as exc, np.errstate(all="ignore"):
        train(cfg)
    assert isinstance(exc.value.events, list)


def test_on_step_sees_events():
    seen = []
    train(_cfg(), on_step=lambda t, st: seen.append(t) if st["event"] is not None else None)
    assert seen == [20, 40, 60, 80]


def test_metrics_monotone_steps():
    steps = [m["step"] for m in train(_cfg(total_steps=100, r_final=5)).metrics]
    assert steps == list(range(1, 101))
    assert all(math.isfinite(m["task_loss"]) for m in train(_cfg(total_steps=100, r_final=5)).metrics)
