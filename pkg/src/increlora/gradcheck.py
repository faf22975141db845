"""Central finite-difference verification of the hand-written gradients.

The oracle recomputes the loss with its own straightforward numpy forward
pass (explicit outer products, no kernels), so it shares no code with the
backward path or the compiled core.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adapter import RESERVE_LAMBDA, SvdAdapter, new_adapter
from .netgraph import Backbone, LinearLayer
from .numkernel import Rng

FD_STEP = 1e-6
TOLERANCE = 1e-5
CLASSES = ("a", "b", "lam", "reg-a", "reg-b")


def _oracle_delta(ad: SvdAdapter) -> np.ndarray:
    d = np.zeros((ad.out_dim, ad.in_dim))
    for c in ad.present():
        d += ad.scale * c.lam[0] * np.outer(c.b, c.a)
    return d


def oracle_task_loss(net: Backbone, x: np.ndarray, y: np.ndarray) -> float:
    h = x
    for i, layer in enumerate(net.layers):
        z = h @ (layer.w0 + _oracle_delta(layer.adapter)).T
        if layer.bias is not None:
            z = z + layer.bias
        if i == len(net.layers) - 1:
            h = z
        elif net.activation == "tanh":
            h = np.tanh(z)
        elif net.activation == "relu":
            h = np.where(z > 0, z, 0.0)
        else:
            h = z
    if net.loss == "mse":
        return float(np.mean((h - y) ** 2))
    m = h.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(h - m), axis=1)) + m[:, 0]
    return float(np.mean(lse - h[np.arange(len(y)), y]))


def oracle_regularizer(ad: SvdAdapter) -> float:
    comps = ad.present()
    A = np.array([c.a for c in comps])
    B = np.array([c.b for c in comps]).T
    r = len(comps)
    return float(np.sum((A @ A.T - np.eye(r)) ** 2) + np.sum((B.T @ B - np.eye(r)) ** 2))


def _central(f, arr: np.ndarray, i: int, step: float) -> float:
    old = arr[i]
    arr[i] = old + step
    up = f()
    arr[i] = old - step
    down = f()
    arr[i] = old
    return (up - down) / (2.0 * step)


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error; 0 when both are exactly zero."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def random_net(rng: Rng, dims, activation: str, loss: str, n_active: int = 2) -> Backbone:
    layers = []
    for k in range(len(dims) - 1):
        d_in, d_out = dims[k], dims[k + 1]
        ad = new_adapter(d_in, d_out, rng, name=f"m{k}", std=0.5)
        for _ in range(n_active):
            c = ad.append_active(rng, lam=float(rng.normal(1)[0]))
        # keep the reserve last so activation order is realistic
        ad.reserve.a[:] = rng.normal(d_in, 0.5)
        ad.reserve.b[:] = rng.normal(d_out, 0.5)
        w0 = rng.normal((d_out, d_in), 1.0 / np.sqrt(d_in))
        bias = rng.normal(d_out, 0.1)
        layers.append(LinearLayer(w0, ad, bias))
    return Backbone(layers, activation=activation, loss=loss)


@dataclass
class CheckReport:
    errors: dict = field(default_factory=lambda: {c: 0.0 for c in CLASSES})
    worst: dict = field(default_factory=dict)  # class -> (error, label)

    def merge(self, cls: str, err: float, label: str) -> None:
        if err >= self.errors[cls]:
            self.errors[cls] = err
            self.worst[cls] = (err, label)

    @property
    def passed(self) -> bool:
        return all(e < TOLERANCE for e in self.errors.values())


def check_net(net: Backbone, x, y, report: CheckReport, label: str, step: float = FD_STEP) -> None:
    _, grads = net.loss_and_grad(x, y)
    pooled = {c: ([], []) for c in CLASSES}
    f_task = lambda: oracle_task_loss(net, x, y)  # noqa: E731
    for layer in net.layers:
        ad = layer.adapter
        _, reg_grads = ad.regularizer()
        f_reg = lambda ad=ad: oracle_regularizer(ad)  # noqa: E731
        for c in ad.present():
            for part in ("a", "b", "lam"):
                if part == "lam" and c.frozen:
                    continue
                arr = getattr(c, part)
                path = ad.path(c, part)
                num = np.array([_central(f_task, arr, i, step) for i in range(arr.size)])
                pooled[part][0].append(grads.params[path])
                pooled[part][1].append(num)
                if part != "lam":
                    num_r = np.array([_central(f_reg, arr, i, step) for i in range(arr.size)])
                    pooled["reg-" + part][0].append(reg_grads[path])
                    pooled["reg-" + part][1].append(num_r)
    for cls, (an, num) in pooled.items():
        if an:
            report.merge(cls, rel_error(np.concatenate(an), np.concatenate(num)), label)


CASES = [("tanh", "mse"), ("relu", "mse"), ("tanh", "xent"), ("relu", "xent")]


def run_checks(seeds=range(10), batch: int = 6) -> CheckReport:
    """Random 3-layer nets for every (activation, loss) pairing over ``seeds``."""
    report = CheckReport()
    for seed in seeds:
        for ci, (act, loss) in enumerate(CASES):
            rng = Rng(seed, 31, ci)
            dims = [int(d) for d in rng.integers(2, 6, size=4)]
            net = random_net(rng, dims, act, loss)
            x = rng.normal((batch, dims[0]))
            if loss == "mse":
                y = rng.normal((batch, dims[-1]))
            else:
                y = rng.integers(0, dims[-1], size=batch)
            check_net(net, x, y, report, f"seed={seed} {act}/{loss} dims={dims}")
    return report


def degenerate_check() -> CheckReport:
    """1x1 single-layer net with one active component and a reserve."""
    rng = Rng(0, 32)
    ad = new_adapter(1, 1, rng, name="m0", std=1.0)
    ad.append_active(rng, lam=0.7)
    ad.reserve.lam[0] = RESERVE_LAMBDA
    net = Backbone([LinearLayer(np.array([[1.3]]), ad)], activation="identity", loss="mse")
    report = CheckReport()
    check_net(net, np.array([[0.5], [-1.5]]), np.array([[0.2], [0.1]]), report, "1x1")
    return report
