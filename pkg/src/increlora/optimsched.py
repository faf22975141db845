"""AdamW with per-group warmup/decay schedules that restart for late-born groups."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScheduleSpec:
    warmup_len: int
    total: int


@dataclass(frozen=True)
class AdamHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decay_lambda: bool = False


@dataclass(eq=False)
class ParamGroup:
    gid: int
    params: dict[str, np.ndarray]
    birth_step: int
    warmup_len: int
    end_step: int
    base_lr: float
    moments: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    updates: int = 0

    def lr_at(self, t: int) -> float:
        return lr_at(self, t)


def lr_at(group: ParamGroup, t: int) -> float:
    """Linear warmup from 0 at birth to ``base_lr`` at birth+W, then linear decay to 0 at T."""
    birth, w, end = group.birth_step, group.warmup_len, group.end_step
    if t < birth:
        raise ValueError(f"group {group.gid} born at {birth} has no lr at step {t}")
    if t < birth + w:
        return group.base_lr * ((t - birth) / w)
    if t < end:
        return group.base_lr * ((end - t) / (end - birth - w))
    return 0.0


class NonFiniteGradient(FloatingPointError):
    pass


class AdamW:
    def __init__(self, base_lr: float, hyper: AdamHyper | None = None, clip_norm: float | None = None):
        if not base_lr > 0:
            raise ValueError(f"base_lr must be positive, got {base_lr}")
        self.base_lr = base_lr
        self.hyper = hyper or AdamHyper()
        self.clip_norm = clip_norm
        self.groups: list[ParamGroup] = []
        self._owner: dict[str, int] = {}

    def register_group(self, params: dict[str, np.ndarray], birth_step: int, spec: ScheduleSpec,
                       base_lr: float | None = None) -> int:
        if spec.warmup_len < 1:
            raise ValueError(f"warmup_len must be >= 1, got {spec.warmup_len}")
        if spec.total <= birth_step + spec.warmup_len:
            raise ValueError(
                f"group born at step {birth_step} with warmup {spec.warmup_len} cannot train "
                f"before the end step {spec.total}")
        for path in params:
            if path in self._owner:
                raise ValueError(f"parameter {path} already belongs to group {self._owner[path]}")
        gid = len(self.groups)
        group = ParamGroup(gid, dict(params), birth_step, spec.warmup_len, spec.total,
                           self.base_lr if base_lr is None else base_lr)
        for path, p in params.items():
            if p.dtype != np.float64 or not p.flags.c_contiguous or p.ndim != 1:
                raise TypeError(f"parameter {path} must be a contiguous float64 vector")
            group.moments[path] = (np.zeros_like(p), np.zeros_like(p))
            self._owner[path] = gid
        self.groups.append(group)
        log.debug("registered group %d at step %d with %d params", gid, birth_step, len(params))
        return gid

    def remove(self, paths) -> None:
        """Forget parameters (and their moments), e.g. masked reserves."""
        for path in paths:
            gid = self._owner.pop(path, None)
            if gid is None:
                continue
            g = self.groups[gid]
            g.params.pop(path, None)
            g.moments.pop(path, None)

    def owned(self) -> set[str]:
        return set(self._owner)

    def audit(self, trainable: dict[str, np.ndarray]) -> None:
        """Every trainable parameter sits in exactly one group and nothing else does."""
        seen: dict[str, int] = {}
        for g in self.groups:
            for path, arr in g.params.items():
                if path in seen:
                    raise AssertionError(f"{path} is in groups {seen[path]} and {g.gid}")
                seen[path] = g.gid
                if path in trainable and trainable[path] is not arr:
                    raise AssertionError(f"group {g.gid} holds a stale array for {path}")
        missing = set(trainable) - set(seen)
        extra = set(seen) - set(trainable)
        if missing or extra:
            raise AssertionError(f"optimizer registry mismatch: missing={sorted(missing)} extra={sorted(extra)}")

    def lrs(self, t: int) -> list[float]:
        return [lr_at(g, t) if t >= g.birth_step else 0.0 for g in self.groups]

    def step(self, t: int, grads: dict[str, np.ndarray]) -> None:
        if self.clip_norm is not None:
            total = np.sqrt(sum(float(np.dot(g, g)) for p, g in grads.items() if p in self._owner))
            if total > self.clip_norm:
                c = self.clip_norm / total
                grads = {p: g * c for p, g in grads.items()}
        for group in self.groups:
            if group.params:
                apply_step(group, grads, t, self.hyper)


def apply_step(group: ParamGroup, grads: dict[str, np.ndarray], t: int, hyper: AdamHyper) -> None:
    """Single-group update; the functional form of ``AdamW.step``."""
    if t <= group.birth_step:
        return
    lr = lr_at(group, t)
    group.updates += 1
    for path, p in group.params.items():
        g = grads.get(path)
        if g is None:
            continue
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient for parameter {path} at step {t}")
        m, v = group.moments[path]
        wd = hyper.weight_decay if (hyper.decay_lambda or not path.endswith(".lam")) else 0.0
        kernels.adamw_update(p, np.ascontiguousarray(g, dtype=np.float64), m, v, lr,
                             hyper.beta1, hyper.beta2, hyper.eps, wd, group.updates)
