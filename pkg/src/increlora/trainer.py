"""Training loop: task loss plus orthogonality penalty, scoring, allocation, AdamW."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adapter import SvdAdapter, new_adapter, plain_adapter
from .allocator import AllocationEvent, AllocatorState, Phase, new_allocator
from .checkpoint import Checkpoint, restore_adapters, snapshot
from .config import TrainConfig
from .netgraph import Backbone, LinearLayer
from .numkernel import Rng
from .optimsched import AdamHyper, AdamW, ScheduleSpec
from .scoring import ImportanceState, raw_score
from .tasks import PlantedTask

log = logging.getLogger(__name__)

# Stream ids under the run seed.
_ADAPTER_INIT = 21


class TrainingDiverged(RuntimeError):
    def __init__(self, msg: str, events: list[dict]):
        super().__init__(msg)
        self.events = events


@dataclass
class RunResult:
    config: TrainConfig
    net: Backbone
    task: PlantedTask
    metrics: list[dict]
    events: list[AllocationEvent]
    final: Checkpoint
    best: Checkpoint
    best_eval: float
    allocator: AllocatorState | None
    importance: ImportanceState | None
    optimizer: AdamW
    closed_at: int | None = None
    lr_log: list[dict] = field(default_factory=list)

    def deployed_ranks(self) -> list[int]:
        return [len(ad.active) for ad in self.net.adapters]

    @property
    def final_eval(self) -> float:
        return self.metrics[-1]["eval"]


def build_backbone(cfg: TrainConfig, task: PlantedTask) -> Backbone:
    """Frozen task backbone with adapters initialised for ``cfg.mode``."""
    spec = task.spec
    layers = []
    for k in range(task.n_layers):
        d_in, d_out = spec.dims[k], spec.dims[k + 1]
        rng = Rng(cfg.seed, _ADAPTER_INIT, k)
        name = f"m{k}"
        if cfg.mode == "fixed_lora":
            ad = plain_adapter(d_in, d_out, cfg.fixed_ranks()[k], rng, name=name,
                               std=cfg.init_std, scale=cfg.adapter_scale)
        elif cfg.advance_learning:
            ad = new_adapter(d_in, d_out, rng, name=name, std=cfg.init_std, scale=cfg.adapter_scale)
        else:
            ad = plain_adapter(d_in, d_out, 1, rng, name=name, std=cfg.init_std, scale=cfg.adapter_scale)
        layers.append(LinearLayer(task.w0[k], ad, task.biases[k]))
    loss = "xent" if spec.kind == "classification" else "mse"
    return Backbone(layers, activation=spec.activation, loss=loss)


def evaluate_net(net: Backbone, task: PlantedTask) -> float:
    """Eval MSE (regression) or accuracy (classification) on the task's fixed eval set."""
    x, y = task.eval_set()
    out, _ = net.forward(x)
    if task.spec.kind == "classification":
        return float(np.mean(np.argmax(out, axis=1) == y))
    return float(np.mean((out - y) ** 2))


def evaluate(checkpoint: Checkpoint, cfg: TrainConfig) -> float:
    task = PlantedTask(cfg.task, cfg.seed)
    net = build_backbone(cfg, task)
    restore_adapters(net.adapters, checkpoint)
    return evaluate_net(net, task)


def _better(kind: str, new: float, old: float) -> bool:
    return new > old if kind == "classification" else new < old


def regularizer_total(adapters: list[SvdAdapter]):
    loss, grads = 0.0, {}
    for ad in adapters:
        l_k, g_k = ad.regularizer()
        loss += l_k
        grads.update(g_k)
    return loss, grads


def train(cfg: TrainConfig, on_step: Callable | None = None, check_invariants: bool = False) -> RunResult:
    """Run ``cfg.total_steps`` steps and return metrics, events and checkpoints.

    ``on_step(t, state)`` is invoked after every optimizer step with a dict
    holding the net, allocator, importance state and this step's event.
    """
    task = PlantedTask(cfg.task, cfg.seed)
    net = build_backbone(cfg, task)
    adapters = net.adapters
    n = len(adapters)
    T, W, nu = cfg.total_steps, cfg.warmup, cfg.interval
    chash = cfg.config_hash()
    kind = task.spec.kind

    opt = AdamW(cfg.base_lr, AdamHyper(**vars(cfg.adam)), clip_norm=cfg.clip_norm)
    initial = {}
    for ad in adapters:
        initial.update(ad.trainable())
    opt.register_group(initial, 0, ScheduleSpec(W, T))

    increlora = cfg.mode == "increlora"
    alloc = new_allocator(n, cfg.h, nu, cfg.r_final) if increlora else None
    importance = ImportanceState(n, cfg.beta1, cfg.beta2) if increlora else None
    grow_rngs = [Rng(cfg.seed, _ADAPTER_INIT, k, 1) for k in range(n)]

    def on_grow(k, ad, new_params, t):
        birth = t if cfg.restart_warmup else 0
        opt.register_group(new_params, birth, ScheduleSpec(W, T))

    def on_mask(k, ad, comp):
        opt.remove([ad.path(comp, "a"), ad.path(comp, "b"), ad.path(comp, "lam")])

    metrics: list[dict] = []
    lr_log: list[dict] = []
    best_eval = -math.inf if kind == "classification" else math.inf
    best = snapshot(adapters, chash, 0, "allocating")
    closed_at = None

    for t in range(1, T + 1):
        x, y = task.batch(t, cfg.batch_size)
        task_loss, grads = net.loss_and_grad(x, y)
        regu_loss, regu_grads = regularizer_total(adapters)
        total = task_loss + cfg.regu_weight * regu_loss
        if not math.isfinite(total):
            raise TrainingDiverged(f"loss became non-finite at step {t}",
                                   [e.record() for e in (alloc.events if alloc else [])])
        param_grads = grads.params
        if cfg.regu_weight:
            for path, g in regu_grads.items():
                base = param_grads.get(path)
                param_grads[path] = cfg.regu_weight * g if base is None else base + cfg.regu_weight * g

        event = None
        if alloc is not None:
            if alloc.phase is Phase.ALLOCATING:
                importance.update_all(
                    raw_score(d, g) if d is not None else 0.0
                    for d, g in zip(grads.deltas, grads.weight_grads))
            was_open = alloc.phase is Phase.ALLOCATING
            event = alloc.step(t, importance, adapters, rng_for=grow_rngs.__getitem__,
                               on_grow=on_grow, on_mask=on_mask)
            if was_open and alloc.phase is Phase.CLOSED:
                closed_at = t
            if event is not None:
                lrs = opt.lrs(t)
                lr_log.append({"step": t, "lrs": lrs})
                log.info("step %d: grew modules %s, r_total=%d", t, event.selected, event.r_total)
                log.debug("step %d: group lrs %s", t, lrs)
            if check_invariants and was_open:
                expected = alloc.expected_r_total(t)
                if alloc.r_total != expected:
                    raise AssertionError(f"step {t}: r_total {alloc.r_total} != {expected}")
                if alloc.phase is Phase.ALLOCATING and sum(ad.rank for ad in adapters) != expected:
                    raise AssertionError(f"step {t}: adapter ranks do not sum to {expected}")

        opt.step(t, param_grads)
        if check_invariants:
            trainable = {}
            for ad in adapters:
                trainable.update(ad.trainable())
            opt.audit(trainable)

        r_total = alloc.r_total if alloc is not None else sum(ad.rank for ad in adapters)
        ev = None
        if t % cfg.eval_interval == 0 or t == T:
            ev = evaluate_net(net, task)
            if _better(kind, ev, best_eval):
                best_eval = ev
                best = snapshot(adapters, chash, t, _phase_name(alloc))
        metrics.append({"step": t, "task_loss": task_loss, "regu_loss": regu_loss,
                        "r_total": int(r_total), "eval": ev, "total_loss": total})
        if on_step is not None:
            on_step(t, {"net": net, "allocator": alloc, "importance": importance, "event": event,
                        "optimizer": opt})

    final = snapshot(adapters, chash, T, _phase_name(alloc))
    return RunResult(cfg, net, task, metrics, list(alloc.events) if alloc else [], final, best, best_eval,
                     alloc, importance, opt, closed_at, lr_log)


def _phase_name(alloc: AllocatorState | None) -> str:
    if alloc is None or alloc.phase is Phase.CLOSED:
        return "closed"
    return "allocating"
