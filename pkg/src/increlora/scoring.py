"""Per-module importance: raw sensitivity, smoothing, uncertainty, composite score."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numkernel import ShapeError

DEFAULT_BETA1 = 0.85
DEFAULT_BETA2 = 0.85


def raw_score(delta_w: np.ndarray, grad: np.ndarray) -> float:
    """Mean of ``|delta_w * grad|`` over all entries."""
    if delta_w.shape != grad.shape:
        raise ShapeError(f"raw_score shape mismatch: {delta_w.shape} vs {grad.shape}")
    return kernels.abs_mean_product(np.ascontiguousarray(delta_w), np.ascontiguousarray(grad))


@dataclass
class ImportanceState:
    """Smoothed sensitivity ``I``, uncertainty ``U`` and score ``S_hat = I * U`` per module."""

    n: int
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    sensitivity: np.ndarray = field(init=False)
    uncertainty: np.ndarray = field(init=False)
    score: np.ndarray = field(init=False)
    step: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one module")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError(f"betas must lie in (0, 1), got {self.beta1}, {self.beta2}")
        self.sensitivity = np.zeros(self.n)
        self.uncertainty = np.zeros(self.n)
        self.score = np.zeros(self.n)

    def update(self, k: int, s: float) -> None:
        # U uses the already-updated I.
        if not s >= 0.0:
            raise ValueError(f"raw score for module {k} must be non-negative, got {s}")
        i_new = self.beta1 * self.sensitivity[k] + (1.0 - self.beta1) * s
        u_new = self.beta2 * self.uncertainty[k] + (1.0 - self.beta2) * abs(i_new - s)
        self.sensitivity[k] = i_new
        self.uncertainty[k] = u_new
        self.score[k] = i_new * u_new

    def update_all(self, scores) -> None:
        scores = list(scores)
        if len(scores) != self.n:
            raise ValueError(f"expected {self.n} scores, got {len(scores)}")
        for k, s in enumerate(scores):
            self.update(k, s)
        self.step += 1

    def top_h(self, h: int) -> list[int]:
        return top_h(self.score, h)

    def snapshot(self) -> dict:
        return {
            "n": self.n,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "step": self.step,
            "sensitivity": self.sensitivity.tolist(),
            "uncertainty": self.uncertainty.tolist(),
            "score": self.score.tolist(),
        }

    @classmethod
    def restore(cls, snap: dict) -> "ImportanceState":
        st = cls(snap["n"], snap["beta1"], snap["beta2"])
        st.step = snap["step"]
        st.sensitivity = np.array(snap["sensitivity"], dtype=np.float64)
        st.uncertainty = np.array(snap["uncertainty"], dtype=np.float64)
        st.score = np.array(snap["score"], dtype=np.float64)
        return st


def top_h(scores, h: int) -> list[int]:
    """Indices of the ``h`` largest scores, ties going to the lower index, ascending."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if not 1 <= h <= n:
        raise ValueError(f"h must satisfy 1 <= h <= {n}, got {h}")
    order = np.argsort(-scores, kind="stable")
    return sorted(int(i) for i in order[:h])
