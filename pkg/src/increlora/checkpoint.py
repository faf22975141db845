"""Flat little-endian checkpoint of adapter state.

Layout (all integers unsigned little-endian, all reals float64 little-endian)::

    magic      4 bytes  b"ILRA"
    version    u32
    cfg_hash   32 bytes (sha256 of the canonical resolved config)
    step       u64
    phase      u8       0 = allocating, 1 = closed
    n_modules  u32
    per module:
        module_id   u32
        in_dim      u32
        out_dim     u32
        n_active    u32
        has_reserve u8
        n_active x (lam f64, a[in_dim] f64, b[out_dim] f64)
        if has_reserve: (lam f64, a[in_dim] f64, b[out_dim] f64)

The backbone weights are not stored; they are rebuilt from the task spec.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .adapter import Component, SvdAdapter

MAGIC = b"ILRA"
VERSION = 1
_HEADER = struct.Struct("<4sI32sQBI")
_MODULE = struct.Struct("<IIIIB")
PHASES = ("allocating", "closed")


class CheckpointError(ValueError):
    pass


@dataclass
class ComponentRecord:
    lam: float
    a: np.ndarray
    b: np.ndarray


@dataclass
class ModuleRecord:
    module_id: int
    in_dim: int
    out_dim: int
    active: list[ComponentRecord] = field(default_factory=list)
    reserve: ComponentRecord | None = None


@dataclass
class Checkpoint:
    config_hash: bytes
    step: int
    phase: str
    modules: list[ModuleRecord]
    version: int = VERSION

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, self.version, self.config_hash, self.step,
                              PHASES.index(self.phase), len(self.modules))]
        for m in self.modules:
            parts.append(_MODULE.pack(m.module_id, m.in_dim, m.out_dim, len(m.active), int(m.reserve is not None)))
            comps = m.active + ([m.reserve] if m.reserve is not None else [])
            for c in comps:
                parts.append(struct.pack("<d", c.lam))
                parts.append(np.asarray(c.a, dtype="<f8").tobytes())
                parts.append(np.asarray(c.b, dtype="<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if len(data) < _HEADER.size:
            raise CheckpointError("checkpoint truncated in header")
        magic, version, chash, step, phase, n_mod = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        if phase >= len(PHASES):
            raise CheckpointError(f"bad phase byte {phase}")
        off = _HEADER.size
        modules = []

        def read_comp(off, d_in, d_out):
            need = 8 * (1 + d_in + d_out)
            if off + need > len(data):
                raise CheckpointError("checkpoint truncated in component data")
            (lam,) = struct.unpack_from("<d", data, off)
            a = np.frombuffer(data, dtype="<f8", count=d_in, offset=off + 8).astype(np.float64)
            b = np.frombuffer(data, dtype="<f8", count=d_out, offset=off + 8 + 8 * d_in).astype(np.float64)
            return ComponentRecord(lam, a, b), off + need

        for _ in range(n_mod):
            if off + _MODULE.size > len(data):
                raise CheckpointError("checkpoint truncated in module header")
            mid, d_in, d_out, n_act, has_res = _MODULE.unpack_from(data, off)
            off += _MODULE.size
            rec = ModuleRecord(mid, d_in, d_out)
            for _ in range(n_act):
                comp, off = read_comp(off, d_in, d_out)
                rec.active.append(comp)
            if has_res:
                rec.reserve, off = read_comp(off, d_in, d_out)
            modules.append(rec)
        if off != len(data):
            raise CheckpointError(f"{len(data) - off} trailing bytes after checkpoint")
        return cls(chash, step, PHASES[phase], modules, version)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path, expected_hash: bytes | None = None) -> "Checkpoint":
        with open(path, "rb") as fh:
            ck = cls.from_bytes(fh.read())
        if expected_hash is not None and ck.config_hash != expected_hash:
            raise CheckpointError("checkpoint was written under a different config (hash mismatch); refusing")
        return ck

    def lambdas(self) -> np.ndarray:
        return np.array([c.lam for m in self.modules for c in m.active])

    def deployed_ranks(self) -> list[int]:
        return [len(m.active) for m in self.modules]


def snapshot(adapters: list[SvdAdapter], config_hash: bytes, step: int, phase: str) -> Checkpoint:
    mods = []
    for k, ad in enumerate(adapters):
        rec = ModuleRecord(k, ad.in_dim, ad.out_dim,
                           [ComponentRecord(c.value, c.a.copy(), c.b.copy()) for c in ad.active])
        if ad.reserve is not None:
            r = ad.reserve
            rec.reserve = ComponentRecord(r.value, r.a.copy(), r.b.copy())
        mods.append(rec)
    return Checkpoint(config_hash, step, phase, mods)


def restore_adapters(adapters: list[SvdAdapter], ck: Checkpoint) -> None:
    """Overwrite adapter contents with the checkpoint's components."""
    if len(adapters) != len(ck.modules):
        raise CheckpointError(f"checkpoint has {len(ck.modules)} modules, model has {len(adapters)}")
    for ad, rec in zip(adapters, ck.modules):
        if (ad.in_dim, ad.out_dim) != (rec.in_dim, rec.out_dim):
            raise CheckpointError(
                f"module {rec.module_id}: checkpoint shape {rec.out_dim}x{rec.in_dim} "
                f"vs model {ad.out_dim}x{ad.in_dim}")
        ad.active, ad.reserve, ad._next_id = [], None, 0

        def make(c: ComponentRecord, frozen: bool) -> Component:
            comp = Component(c.a.copy(), c.b.copy(), np.array([c.lam]), frozen, ad._next_id)
            ad._next_id += 1
            return comp

        ad.active = [make(c, False) for c in rec.active]
        if rec.reserve is not None:
            ad.reserve = make(rec.reserve, True)
