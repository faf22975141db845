"""Run configuration: JSON schema, defaults, validation and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field

import jsonschema

from .numkernel import DEFAULT_INIT_STD
from .tasks import TaskSpec

MODES = ("increlora", "fixed_lora")

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_unit = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}

TASK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dims", "planted_ranks"],
    "properties": {
        "dims": {"type": "array", "items": _pos_int, "minItems": 2},
        "planted_ranks": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "planted_scale": {"oneOf": [{"type": "number", "minimum": 0},
                                    {"type": "array", "items": {"type": "number", "minimum": 0}}]},
        "activation": {"enum": ["tanh", "relu", "identity"]},
        "kind": {"enum": ["regression", "classification"]},
        "noise": {"type": "number", "minimum": 0},
        "bias": {"type": "boolean"},
        "w0_gain": {"type": "number", "exclusiveMinimum": 0},
        "layer_types": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "eval_samples": _pos_int,
        "seed": {"type": ["integer", "null"]},
    },
}

ADAM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "beta1": _unit, "beta2": _unit,
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "weight_decay": {"type": "number", "minimum": 0},
        "decay_lambda": {"type": "boolean"},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["task"],
    "properties": {
        "mode": {"enum": list(MODES)},
        "seed": {"type": "integer", "minimum": 0},
        "total_steps": _pos_int,
        "warmup": _pos_int,
        "nu": {"type": ["integer", "null"], "minimum": 1},
        "base_lr": {"type": "number", "exclusiveMinimum": 0},
        "batch_size": _pos_int,
        "h": _pos_int,
        "r_final": {"type": "integer", "minimum": 0},
        "beta1": _unit,
        "beta2": _unit,
        "regu_weight": {"type": "number", "minimum": 0},
        "advance_learning": {"type": "boolean"},
        "restart_warmup": {"type": "boolean"},
        "init_std": {"type": "number", "exclusiveMinimum": 0},
        "adapter_scale": {"type": "number", "exclusiveMinimum": 0},
        "lora_rank": {"type": "integer", "minimum": 0},
        "rank_distribution": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
        "eval_every": {"type": ["integer", "null"], "minimum": 1},
        "dropout": {"const": 0},
        "clip_norm": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "adam": ADAM_SCHEMA,
        "task": TASK_SCHEMA,
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every diagnostic."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decay_lambda: bool = False


@dataclass
class TrainConfig:
    task: TaskSpec
    mode: str = "increlora"
    seed: int = 0
    total_steps: int = 2000
    warmup: int = 50
    nu: int | None = None
    base_lr: float = 0.01
    batch_size: int = 32
    h: int = 1
    r_final: int = 0
    beta1: float = 0.85
    beta2: float = 0.85
    regu_weight: float = 0.1
    advance_learning: bool = True
    restart_warmup: bool = True
    init_std: float = DEFAULT_INIT_STD
    adapter_scale: float = 1.0
    lora_rank: int = 4
    rank_distribution: list[int] | None = None
    eval_every: int | None = None
    dropout: float = 0
    clip_norm: float | None = None
    adam: AdamConfig = field(default_factory=AdamConfig)

    @property
    def n_modules(self) -> int:
        return self.task.n_layers

    @property
    def interval(self) -> int:
        return self.nu if self.nu is not None else self.warmup

    @property
    def eval_interval(self) -> int:
        return self.eval_every if self.eval_every is not None else self.interval

    def fixed_ranks(self) -> list[int]:
        if self.rank_distribution is not None:
            return list(self.rank_distribution)
        return [self.lora_rank] * self.n_modules

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nu"] = self.interval
        d["eval_every"] = self.eval_interval
        return d

    def config_hash(self) -> bytes:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).digest()

    def replace(self, **changes) -> "TrainConfig":
        d = self.to_dict()
        for key, value in changes.items():
            if key == "task" and isinstance(value, dict):
                d["task"].update(value)
            else:
                d[key] = value
        return from_dict(d)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _semantic_errors(cfg: TrainConfig) -> list[str]:
    errs = []
    try:
        cfg.task.validate()
    except ValueError as exc:
        errs.append(f"task: {exc}")
        return errs
    n = cfg.n_modules
    T, W, nu = cfg.total_steps, cfg.warmup, cfg.interval
    if T <= W:
        errs.append(f"total_steps={T} must exceed warmup={W}")
    if cfg.mode == "increlora":
        if not 1 <= cfg.h <= n:
            errs.append(f"h={cfg.h} must lie in [1, {n}]")
        elif cfg.r_final < n:
            errs.append(f"r_final={cfg.r_final} must be at least the module count {n}")
        elif (cfg.r_final - n) % cfg.h:
            extra = (cfg.r_final - n) % cfg.h
            errs.append(f"(r_final - n)={cfg.r_final - n} not divisible by h={cfg.h}; "
                        f"use r_final={cfg.r_final - extra} or {cfg.r_final - extra + cfg.h}")
        else:
            last_event = ((cfg.r_final - n) // cfg.h) * nu
            if last_event + W >= T:
                errs.append(f"last allocation event at step {last_event} leaves no room for a "
                            f"{W}-step warmup before total_steps={T}")
    else:
        ranks = cfg.fixed_ranks()
        if len(ranks) != n:
            errs.append(f"rank_distribution has {len(ranks)} entries for {n} modules")
        dims = cfg.task.dims
        for k, r in enumerate(ranks[:n]):
            if r > min(dims[k], dims[k + 1]):
                errs.append(f"fixed rank {r} exceeds layer {k} size {dims[k + 1]}x{dims[k]}")
    return errs


def from_dict(raw: dict) -> TrainConfig:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    problems = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if problems:
        raise ConfigError([f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in problems])
    d = copy.deepcopy(raw)
    task = TaskSpec(**d.pop("task"))
    adam = AdamConfig(**d.pop("adam", {}))
    cfg = TrainConfig(task=task, adam=adam, **d)
    errs = _semantic_errors(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


def load(path) -> TrainConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"]) from exc
    return from_dict(raw)
