"""Planted low-rank synthetic tasks.

A frozen backbone ``W0`` is drawn per layer; a teacher network adds to each
layer a delta of known rank built from orthonormal factors. The student
starts from ``W0`` and must recover the deltas through its adapters, so the
planted ranks are ground truth for how rank ought to be distributed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numkernel import Rng

# Stream ids under the task seed.
_BACKBONE, _PLANT, _TRAIN, _EVAL = 11, 12, 13, 14


@dataclass
class TaskSpec:
    dims: list[int]
    planted_ranks: list[int]
    planted_scale: float | list[float] = 1.0
    activation: str = "tanh"
    kind: str = "regression"
    noise: float = 0.01
    bias: bool = False
    w0_gain: float = 1.0
    layer_types: list[str] = field(default_factory=lambda: ["fc"])
    eval_samples: int = 1024
    seed: int | None = None

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    def validate(self) -> None:
        if len(self.dims) < 2 or any(d < 1 for d in self.dims):
            raise ValueError(f"dims must list at least two positive sizes, got {self.dims}")
        if len(self.planted_ranks) != self.n_layers:
            raise ValueError(f"need one planted rank per layer ({self.n_layers}), got {self.planted_ranks}")
        for k, rho in enumerate(self.planted_ranks):
            cap = min(self.dims[k], self.dims[k + 1])
            if not 0 <= rho <= cap:
                raise ValueError(f"planted rank {rho} for layer {k} outside [0, {cap}]")
        scales = self.scales()
        if len(scales) != self.n_layers or any(s < 0 for s in scales):
            raise ValueError(f"planted_scale must be a non-negative scalar or one value per layer")
        if self.kind not in ("regression", "classification"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.n_layers % len(self.layer_types):
            raise ValueError(
                f"{self.n_layers} layers cannot be laid out in blocks of {len(self.layer_types)} module types")

    def scales(self) -> list[float]:
        if isinstance(self.planted_scale, (int, float)):
            return [float(self.planted_scale)] * self.n_layers
        return [float(s) for s in self.planted_scale]


def _orthonormal(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """rows x cols with orthonormal columns (rows >= cols)."""
    q, r = np.linalg.qr(rng.normal((rows, cols)))
    return q * np.sign(np.diag(r))


def _square_orthogonal_like(rng: Rng, out_dim: int, in_dim: int) -> np.ndarray:
    if out_dim >= in_dim:
        return _orthonormal(rng, out_dim, in_dim)
    return _orthonormal(rng, in_dim, out_dim).T


class PlantedTask:
    def __init__(self, spec: TaskSpec, seed: int):
        spec.validate()
        self.spec = spec
        self.seed = spec.seed if spec.seed is not None else int(seed)
        base = Rng(self.seed)
        brng, prng = base.child(_BACKBONE), base.child(_PLANT)
        self.w0: list[np.ndarray] = []
        self.biases: list[np.ndarray | None] = []
        self.planted: list[np.ndarray] = []
        for k in range(spec.n_layers):
            d_in, d_out = spec.dims[k], spec.dims[k + 1]
            self.w0.append(spec.w0_gain * _square_orthogonal_like(brng, d_out, d_in))
            self.biases.append(0.1 * brng.normal(d_out) if spec.bias else None)
        for k, (rho, s) in enumerate(zip(spec.planted_ranks, spec.scales())):
            d_in, d_out = spec.dims[k], spec.dims[k + 1]
            if rho == 0:
                self.planted.append(np.zeros((d_out, d_in)))
                continue
            U = _orthonormal(prng, d_out, rho)
            V = _orthonormal(prng, d_in, rho)
            self.planted.append(s * (U @ V.T))
        self._eval = None

    @property
    def n_layers(self) -> int:
        return self.spec.n_layers

    def teacher(self, x: np.ndarray) -> np.ndarray:
        h = x
        last = self.n_layers - 1
        for k in range(self.n_layers):
            z = h @ (self.w0[k] + self.planted[k]).T
            if self.biases[k] is not None:
                z = z + self.biases[k]
            if k == last:
                return z
            if self.spec.activation == "tanh":
                h = np.tanh(z)
            elif self.spec.activation == "relu":
                h = np.maximum(z, 0.0)
            else:
                h = z
        return h

    def _targets(self, x, rng: Rng | None):
        out = self.teacher(x)
        if self.spec.kind == "classification":
            return np.argmax(out, axis=1).astype(np.int64)
        if rng is not None and self.spec.noise > 0:
            out = out + self.spec.noise * rng.normal(out.shape)
        return out

    def batch(self, step: int, batch_size: int):
        """Training batch for ``step``; a pure function of (task seed, step)."""
        rng = Rng(self.seed, _TRAIN, step)
        x = rng.normal((batch_size, self.spec.dims[0]))
        return x, self._targets(x, rng)

    def eval_set(self):
        """Fixed evaluation inputs with noiseless targets."""
        if self._eval is None:
            rng = Rng(self.seed, _EVAL)
            x = rng.normal((self.spec.eval_samples, self.spec.dims[0]))
            self._eval = (x, self._targets(x, None))
        return self._eval

    def module_grid_position(self, k: int) -> tuple[int, int]:
        t = len(self.spec.layer_types)
        return k // t, k % t
