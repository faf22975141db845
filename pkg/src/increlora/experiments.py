"""Run archiving, event-log replay, multi-seed comparison and the regularizer ablation."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .allocator import Phase, RankCounter, new_allocator
from .config import TrainConfig
from .reports import (
    lambda_histogram,
    rank_report,
    static_report,
    write_lambda_histogram,
    write_rank_report,
    write_trajectory,
)
from .trainer import RunResult, TrainingDiverged, train

log = logging.getLogger(__name__)

METRIC_KEYS = ("step", "task_loss", "regu_loss", "r_total", "eval")

METRICS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": list(METRIC_KEYS),
    "properties": {
        "step": {"type": "integer", "minimum": 1},
        "task_loss": {"type": "number"},
        "regu_loss": {"type": "number"},
        "r_total": {"type": "integer", "minimum": 0},
        "eval": {"type": ["number", "null"]},
    },
}

EVENT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["step", "selected", "r_total", "ranks", "scores"],
    "properties": {
        "step": {"type": "integer"},
        "selected": {"type": "array", "items": {"type": "integer"}},
        "r_total": {"type": "integer"},
        "ranks": {"type": "array", "items": {"type": "integer"}},
        "scores": {"type": "array", "items": {"type": "number"}},
    },
}


def _jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_run(result: RunResult, out: Path) -> None:
    """Archive every deterministic artifact of a finished run under ``out``."""
    cfg = result.config
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved-config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    _jsonl(out / "metrics.jsonl", ({k: m[k] for k in METRIC_KEYS} for m in result.metrics))
    _jsonl(out / "events.jsonl", (e.record() for e in result.events))
    result.final.save(out / "checkpoint.bin")
    result.best.save(out / "best_checkpoint.bin")
    n_types = len(cfg.task.layer_types)
    if cfg.mode == "fixed_lora":
        report = static_report(cfg.fixed_ranks(), n_types)
    else:
        report = rank_report([e.record() for e in result.events], cfg.n_modules, n_types,
                             advance=cfg.advance_learning)
    write_rank_report(out / "rank_report.csv", report, cfg.task.layer_types)
    write_trajectory(out / "rank_trajectory.csv", report)
    write_lambda_histogram(out / "lambda_hist.csv", lambda_histogram(result.final.lambdas()))


def write_run_info(out: Path, started: float, finished: float, status: str, seed: int) -> None:
    info = {
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(finished)),
        "wall_seconds": round(finished - started, 3),
        "status": status,
        "seed": seed,
        "version": __version__,
        "kernel_backend": kernels.active_backend(),
        "pid": os.getpid(),
    }
    (out / "run-info.json").write_text(json.dumps(info, indent=2) + "\n")


def train_to_dir(cfg: TrainConfig, out: Path) -> RunResult:
    """Train and archive. On divergence the event log so far is still written."""
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        result = train(cfg)
    except TrainingDiverged as exc:
        _jsonl(out / "events.jsonl", exc.events)
        write_run_info(out, started, time.time(), "diverged", cfg.seed)
        raise
    write_run(result, out)
    write_run_info(out, started, time.time(), "ok", cfg.seed)
    return result


# -- replay -------------------------------------------------------------------


@dataclass
class ReplayResult:
    ok: bool
    regenerated: list[dict]
    divergence: str | None = None


def replay(events: list[dict], cfg: TrainConfig) -> ReplayResult:
    """Re-run the allocator on rank counters, feeding it the logged scores.

    Every step 1..T is simulated so a missing, extra or mistimed event shows
    up as a divergence, not just a wrong selection.
    """
    if cfg.mode != "increlora":
        ok = not events
        return ReplayResult(ok, [], None if ok else "fixed_lora run has allocation events")
    n = cfg.n_modules
    alloc = new_allocator(n, cfg.h, cfg.interval, cfg.r_final)
    counters = [RankCounter(0, True) if cfg.advance_learning else RankCounter(1, False) for _ in range(n)]
    by_step = {int(e["step"]): e for e in events}
    zeros = [0.0] * n
    for t in range(1, cfg.total_steps + 1):
        if alloc.phase is Phase.CLOSED:
            break
        logged = by_step.get(t)
        alloc.step(t, logged["scores"] if logged else zeros, counters)
    regenerated = [e.record() for e in alloc.events]
    for i in range(max(len(events), len(regenerated))):
        want = events[i] if i < len(events) else None
        got = regenerated[i] if i < len(regenerated) else None
        if want != got:
            return ReplayResult(False, regenerated, f"event #{i}: logged {want} vs replayed {got}")
    return ReplayResult(True, regenerated)


# -- multi-seed experiments -----------------------------------------------------


def _run_seed(args) -> dict:
    cfg, seed = args
    res = train(cfg.replace(seed=seed))
    return {"seed": seed, "eval": res.final_eval, "ranks": res.deployed_ranks(),
            "gram": float(np.mean([ad.gram_residual() for ad in res.net.adapters]))}


def run_seeds(cfg: TrainConfig, seeds, jobs: int = 1) -> list[dict]:
    tasks = [(cfg, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_run_seed, tasks))
    return [_run_seed(t) for t in tasks]


def summarize(values) -> dict:
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"median": float(med), "iqr": float(q3 - q1), "q1": float(q1), "q3": float(q3)}


def compare(cfg_a: TrainConfig, cfg_b: TrainConfig, seeds, jobs: int = 1) -> dict:
    """Paired comparison; A wins a seed when its metric is at least as good as B's."""
    runs_a = run_seeds(cfg_a, seeds, jobs)
    runs_b = run_seeds(cfg_b, seeds, jobs)
    higher_better = cfg_a.task.kind == "classification"
    wins = 0
    for ra, rb in zip(runs_a, runs_b):
        wins += ra["eval"] >= rb["eval"] if higher_better else ra["eval"] <= rb["eval"]
    return {
        "seeds": list(seeds),
        "a": {"mode": cfg_a.mode, "runs": runs_a, **summarize([r["eval"] for r in runs_a])},
        "b": {"mode": cfg_b.mode, "runs": runs_b, **summarize([r["eval"] for r in runs_b])},
        "wins_a": int(wins),
        "metric": "accuracy" if higher_better else "mse",
    }


ABLATION_WEIGHTS = (0.0, 0.01, 0.1, 1.0)


def ablate(cfg: TrainConfig, seeds, weights=ABLATION_WEIGHTS, jobs: int = 1) -> list[dict]:
    rows = []
    for w in weights:
        runs = run_seeds(cfg.replace(regu_weight=w), seeds, jobs)
        rows.append({"regu_weight": w, "eval": summarize([r["eval"] for r in runs]),
                     "gram": summarize([r["gram"] for r in runs])})
    return rows
