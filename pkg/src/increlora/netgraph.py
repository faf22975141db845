"""Fixed-topology backbone of frozen linear layers, each carrying one adapter.

Samples are rows. Each layer computes ``z = h_prev @ (W0 + delta_w)^T + bias``;
the activation is applied between layers, never after the last one. Backward
is written out by hand for this topology and returns, per layer, the gradient
with respect to the effective weight (which equals the gradient with respect
to ``delta_w`` since ``W0`` is frozen) together with the adapter parameter
gradients derived from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adapter import SvdAdapter
from .numkernel import ShapeError

ACTIVATIONS = ("tanh", "relu", "identity")
LOSSES = ("mse", "xent")


@dataclass(eq=False)
class LinearLayer:
    w0: np.ndarray
    adapter: SvdAdapter
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.w0 = np.ascontiguousarray(self.w0, dtype=np.float64)
        self.w0.setflags(write=False)
        if self.bias is not None:
            self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
            self.bias.setflags(write=False)
        out_dim, in_dim = self.w0.shape
        if (self.adapter.out_dim, self.adapter.in_dim) != (out_dim, in_dim):
            raise ShapeError(
                f"adapter {self.adapter.out_dim}x{self.adapter.in_dim} does not fit layer {out_dim}x{in_dim}")

    @property
    def in_dim(self) -> int:
        return self.w0.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w0.shape[0]


@dataclass
class ForwardCache:
    token: int
    inputs: list  # h_{l-1} per layer
    pre: list  # z_l per layer
    weights: list  # W_eff per layer
    deltas: list  # delta_w per layer (None when adapters disabled)


@dataclass
class BatchGrad:
    weight_grads: list  # dL/dW_eff per layer, out x in
    params: dict = field(default_factory=dict)  # parameter path -> gradient
    deltas: list | None = None  # delta_w per layer as used in the forward pass


@dataclass(eq=False)
class Backbone:
    layers: list[LinearLayer]
    activation: str = "tanh"
    loss: str = "mse"
    _token: int = 0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layers not conformable: {prev.w0.shape} then {nxt.w0.shape}")

    @property
    def adapters(self) -> list[SvdAdapter]:
        return [layer.adapter for layer in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def _act(self, z):
        if self.activation == "tanh":
            return np.tanh(z)
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        return z

    def _act_grad(self, z, h, dh):
        if self.activation == "tanh":
            return dh * (1.0 - h * h)
        if self.activation == "relu":
            return dh * (z > 0.0)
        return dh

    def forward(self, x: np.ndarray, adapters_enabled: bool = True):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"input shape {x.shape} does not match in-dim {self.in_dim}")
        self._token += 1
        cache = ForwardCache(self._token, [], [], [], [])
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            if adapters_enabled and layer.adapter.rank:
                dw = layer.adapter.delta_w()
                w = layer.w0 + dw
            else:
                dw = None
                w = layer.w0
            z = h @ w.T
            if layer.bias is not None:
                z = z + layer.bias
            cache.inputs.append(h)
            cache.pre.append(z)
            cache.weights.append(w)
            cache.deltas.append(dw)
            h = z if i == last else self._act(z)
        return h, cache

    def backward(self, cache: ForwardCache | None, dout: np.ndarray) -> BatchGrad:
        if cache is None or cache.token != self._token:
            raise RuntimeError("backward called without a matching forward pass")
        n_layers = len(self.layers)
        wgrads = [None] * n_layers
        params = {}
        dz = np.asarray(dout, dtype=np.float64)
        if dz.shape != cache.pre[-1].shape:
            raise ShapeError(f"upstream gradient {dz.shape} does not match output {cache.pre[-1].shape}")
        for i in range(n_layers - 1, -1, -1):
            layer = self.layers[i]
            G = np.ascontiguousarray(dz.T @ cache.inputs[i])
            wgrads[i] = G
            if cache.deltas[i] is not None:
                params.update(layer.adapter.grads_from_weight_grad(G))
            if i > 0:
                dh = dz @ cache.weights[i]
                dz = self._act_grad(cache.pre[i - 1], cache.inputs[i], dh)
        return BatchGrad(wgrads, params)

    def task_loss(self, out: np.ndarray, y: np.ndarray):
        """Return ``(loss, dL/dout)`` with mean reduction over the batch."""
        n = out.shape[0]
        if self.loss == "mse":
            y = np.asarray(y, dtype=np.float64)
            if y.shape != out.shape:
                raise ShapeError(f"target shape {y.shape} does not match output {out.shape}")
            diff = out - y
            return float(np.mean(diff * diff)), (2.0 / diff.size) * diff
        y = np.asarray(y)
        if y.shape != (n,) or not np.issubdtype(y.dtype, np.integer):
            raise ShapeError(f"labels must be an integer vector of length {n}, got {y.shape} {y.dtype}")
        if y.min() < 0 or y.max() >= out.shape[1]:
            raise ShapeError(f"labels out of range for {out.shape[1]} classes")
        shifted = out - out.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logz
        loss = -float(np.mean(logp[np.arange(n), y]))
        grad = np.exp(logp)
        grad[np.arange(n), y] -= 1.0
        return loss, grad / n

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray):
        out, cache = self.forward(x)
        loss, dout = self.task_loss(out, y)
        grads = self.backward(cache, dout)
        grads.deltas = cache.deltas
        return loss, grads
