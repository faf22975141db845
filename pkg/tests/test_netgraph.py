import numpy as np
import pytest

from increlora.adapter import new_adapter, plain_adapter
from increlora.gradcheck import oracle_task_loss, random_net, rel_error
from increlora.netgraph import Backbone, LinearLayer
from increlora.numkernel import Rng, ShapeError


def _net(seed=0, act="tanh", loss="mse", dims=(4, 5, 3)):
    return random_net(Rng(seed), list(dims), act, loss)


def test_forward_matches_oracle():
    net = _net()
    x = Rng(1).normal((7, 4))
    y = Rng(2).normal((7, 3))
    out, _ = net.forward(x)
    loss, _ = net.task_loss(out, y)
    assert loss == pytest.approx(oracle_task_loss(net, x, y), rel=1e-13)


def test_zero_lambda_masked_is_bitwise_backbone():
    rng = Rng(3)
    layers = []
    for d_in, d_out in [(4, 6), (6, 2)]:
        ad = new_adapter(d_in, d_out, rng)
        ad.append_active(rng, lam=0.0)
        ad.mask_reserve()
        layers.append(LinearLayer(rng.normal((d_out, d_in)), ad, rng.normal(d_out)))
    net = Backbone(layers, activation="tanh")
    x = rng.normal((9, 4))
    with_ad, _ = net.forward(x)
    frozen, _ = net.forward(x, adapters_enabled=False)
    assert with_ad.tobytes() == frozen.tobytes()


@pytest.mark.parametrize("act,loss", [("tanh", "mse"), ("relu", "xent"), ("identity", "mse")])
def test_weight_grad_finite_difference(act, loss):
    net = _net(4, act, loss)
    rng = Rng(5)
    x = rng.normal((6, 4))
    y = rng.integers(0, 3, size=6) if loss == "xent" else rng.normal((6, 3))
    _, grads = net.loss_and_grad(x, y)
    layer = net.layers[0]
    ad = layer.adapter
    c = ad.active[0]
    num = np.empty_like(c.b)
    for i in range(c.b.size):
        old = c.b[i]
        c.b[i] = old + 1e-6
        up = oracle_task_loss(net, x, y)
        c.b[i] = old - 1e-6
        down = oracle_task_loss(net, x, y)
        c.b[i] = old
        num[i] = (up - down) / 2e-6
    assert rel_error(grads.params[ad.path(c, "b")], num) < 1e-6


def test_backward_requires_matching_forward():
    net = _net()
    x = Rng(0).normal((2, 4))
    _, stale = net.forward(x)
    net.forward(x)
    with pytest.raises(RuntimeError):
        net.backward(stale, np.zeros((2, 3)))
    with pytest.raises(RuntimeError):
        net.backward(None, np.zeros((2, 3)))


def test_shape_errors():
    net = _net()
    with pytest.raises(ShapeError):
        net.forward(np.ones((2, 5)))
    with pytest.raises(ShapeError):
        net.task_loss(np.ones((2, 3)), np.ones((2, 2)))
    with pytest.raises(ShapeError):
        LinearLayer(np.ones((3, 3)), plain_adapter(2, 3, 1, Rng(0)))
    a = LinearLayer(np.ones((3, 2)), plain_adapter(2, 3, 0, Rng(0)))
    b = LinearLayer(np.ones((3, 2)), plain_adapter(2, 3, 0, Rng(0)))
    with pytest.raises(ShapeError):
        Backbone([a, b])


def test_xent_labels_checked():
    net = _net(loss="xent")
    out = np.zeros((2, 3))
    with pytest.raises(ShapeError):
        net.task_loss(out, np.array([0.0, 1.0]))
    with pytest.raises(ShapeError):
        net.task_loss(out, np.array([0, 3]))


def test_frozen_weights_read_only():
    net = _net()
    with pytest.raises(ValueError):
        net.layers[0].w0[0, 0] = 1.0


def test_xent_uniform_logits():
    net = _net(loss="xent")
    loss, grad = net.task_loss(np.zeros((2, 4)), np.array([0, 2]))
    assert loss == pytest.approx(np.log(4.0), rel=1e-15)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-16)
