import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfvscale import neuralnet as nn
from nfvscale.neuralnet import DenseNet, DimensionError

from gradcheck import max_rel_error, numeric_param_grad


def hand_net(output="linear"):
    net = DenseNet([2, 2, 1], output)
    net.W = [np.array([[1.0, -1.0], [2.0, 0.5]]), np.array([[2.0], [3.0]])]
    net.b = [np.array([0.5, -1.0]), np.array([0.25])]
    return net


def test_zero_net_outputs_zero():
    net = DenseNet([3, 4, 2])
    net.W = [np.zeros_like(w) for w in net.W]
    net.b = [np.zeros_like(b) for b in net.b]
    assert np.array_equal(nn.forward(net, [1.0, -2.0, 3.0]), np.zeros(2))


def test_identity_single_layer():
    net = DenseNet([3, 3])
    net.W = [np.eye(3)]
    net.b = [np.zeros(3)]
    x = np.array([0.3, -1.5, 2.0])
    assert np.array_equal(nn.forward(net, x), x)


def test_hand_computed_2_2_1():
    # z1 = [1 + 4 + 0.5, -1 + 1 - 1] = [5.5, -1]; relu -> [5.5, 0]; y = 11 + 0.25
    assert nn.forward(hand_net(), [1.0, 2.0]).tolist() == [11.25]
    assert nn.forward(hand_net("tanh"), [1.0, 2.0])[0] == pytest.approx(np.tanh(11.25))


def test_linear_unit_gradient():
    net = DenseNet([1, 1])
    net.W, net.b = [np.array([[0.7]])], [np.array([0.1])]
    g, gx = nn.backward(net, [3.0], [1.0])
    assert g.dW[0][0, 0] == 3.0 and g.db[0][0] == 1.0 and gx[0] == pytest.approx(0.7)


def test_dead_relu_blocks_gradient():
    net = hand_net()
    g, _ = nn.backward(net, [1.0, 2.0], [1.0])
    # second hidden unit has pre-activation -1
    assert g.dW[0][:, 1].tolist() == [0.0, 0.0] and g.db[0][1] == 0.0
    assert g.dW[1][1, 0] == 0.0


def test_dimension_errors():
    net = DenseNet([3, 2])
    with pytest.raises(DimensionError):
        nn.forward(net, [1.0, 2.0])
    with pytest.raises(DimensionError):
        nn.backward(net, [1.0, 2.0, 3.0], [1.0])
    with pytest.raises(DimensionError):
        nn.soft_update(DenseNet([3, 2]), DenseNet([3, 3]), 0.5)


def random_case(seed):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 4))
    sizes = [int(s) for s in rng.integers(1, 6, depth + 1)]
    net = DenseNet(sizes, str(rng.choice(["linear", "tanh"])), rng)
    x = rng.normal(size=(int(rng.integers(1, 4)), sizes[0]))
    up = rng.normal(size=(x.shape[0], sizes[-1]))
    return net, x, up


def check_gradients(net, x, up):
    loss = lambda: float(np.sum(nn.forward(net, x) * up))
    g, gx = nn.backward(net, x, up)
    num = numeric_param_grad(loss, net.params())
    ana = [a for pair in zip(g.dW, g.db) for a in pair]
    xs = x.copy()
    num_x = numeric_param_grad(lambda: float(np.sum(nn.forward(net, xs) * up)), [xs])
    return max(max_rel_error(ana, num), max_rel_error([gx], num_x))


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_backward_matches_finite_differences(seed):
    assert check_gradients(*random_case(seed)) < 1e-4


@given(st.floats(0.0, 1.0))
def test_soft_update_is_a_convex_mix(tau):
    rng = np.random.default_rng(1)
    src, tgt = DenseNet([3, 4, 2], rng=rng), DenseNet([3, 4, 2], rng=rng)
    before = [p.copy() for p in tgt.params()]
    nn.soft_update(tgt, src, tau)
    for t, b, s in zip(tgt.params(), before, src.params()):
        assert np.allclose(t, tau * s + (1 - tau) * b)


def test_soft_update_examples():
    src, tgt = DenseNet([1, 1]), DenseNet([1, 1])
    src.W, src.b = [np.array([[4.0]])], [np.array([4.0])]
    tgt.W, tgt.b = [np.array([[2.0]])], [np.array([2.0])]
    nn.soft_update(tgt, src, 0.5)
    assert tgt.W[0][0, 0] == 3.0 and tgt.b[0][0] == 3.0
    nn.soft_update(tgt, src, 0.0)
    assert tgt.W[0][0, 0] == 3.0
    nn.soft_update(tgt, src, 1.0)
    assert tgt.W[0][0, 0] == 4.0


def test_sgd_with_zero_rate_changes_nothing():
    net = DenseNet([3, 4, 2], rng=np.random.default_rng(0))
    before = [p.copy() for p in net.params()]
    g, _ = nn.backward(net, np.ones(3), np.ones(2))
    nn.sgd_update(net, g, 0.0)
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))


def test_sgd_descends():
    net = DenseNet([2, 1], rng=np.random.default_rng(0))
    x, y = np.array([[1.0, 2.0], [0.5, -1.0]]), np.array([[1.0], [0.0]])
    loss = lambda: float(np.sum((nn.forward(net, x) - y) ** 2))
    start = loss()
    for _ in range(200):
        g, _ = nn.backward(net, x, 2 * (nn.forward(net, x) - y))
        nn.sgd_update(net, g, 0.05)
    assert loss() < start * 1e-3


@pytest.mark.parametrize("kind", ["sgd", "adam"])
def test_optimizers_fit_a_line(kind):
    net = DenseNet([1, 1], rng=np.random.default_rng(0))
    opt = nn.make_optimizer(net, kind, 0.05, momentum=0.5)
    x = np.linspace(-1, 1, 8)[:, None]
    y = 3 * x - 1
    for _ in range(1500):
        g, _ = nn.backward(net, x, 2 * (nn.forward(net, x) - y) / len(x))
        opt.step(g)
    assert net.W[0][0, 0] == pytest.approx(3.0, abs=1e-3) and net.b[0][0] == pytest.approx(-1.0, abs=1e-3)


def test_forward_is_deterministic_and_batch_consistent():
    net = DenseNet([4, 8, 3], "tanh", np.random.default_rng(5))
    x = np.random.default_rng(6).normal(size=(5, 4))
    full = nn.forward(net, x)
    assert full.tobytes() == nn.forward(net, x.copy()).tobytes()
    for i in range(5):
        assert np.allclose(nn.forward(net, x[i]), full[i], rtol=0, atol=1e-15)


def test_text_round_trip_is_exact(tmp_path):
    net = DenseNet([3, 5, 2], "tanh", np.random.default_rng(2), final_scale=3e-3)
    path = tmp_path / "net.txt"
    nn.save(net, path)
    back = nn.load(path)
    assert back.sizes == net.sizes and back.output == "tanh"
    assert all(np.array_equal(a, b) for a, b in zip(net.params(), back.params()))
    assert path.read_text().startswith("densenet 1\n")


def test_final_layer_init_is_small():
    net = DenseNet([10, 64, 64, 2], "tanh", np.random.default_rng(0), final_scale=3e-3)
    assert np.abs(net.W[-1]).max() <= 3e-3 and np.abs(net.W[0]).max() <= 1 / np.sqrt(10)
