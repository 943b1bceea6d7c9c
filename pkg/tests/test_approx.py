import numpy as np
import pytest

from pimlab.approx import MLP, Adam, load_mlp, load_mlp_file, save_mlp, save_mlp_file


def fd_param_grad(net, x, grad_out, eps=1e-6):
    """Central-difference gradient of sum(grad_out * net(x)) w.r.t. params."""
    p0 = net.get_params()
    g = np.zeros_like(p0)
    for i in range(p0.size):
        p = p0.copy()
        p[i] += eps
        net.set_params(p)
        hi = float(np.sum(grad_out * net.forward(x, cache=False)))
        p[i] -= 2 * eps
        net.set_params(p)
        lo = float(np.sum(grad_out * net.forward(x, cache=False)))
        g[i] = (hi - lo) / (2 * eps)
    net.set_params(p0)
    return g


def fd_input_grad(net, x, grad_out, eps=1e-6):
    g = np.zeros_like(x)
    flat = g.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        x1 = xf.copy()
        x1[i] += eps
        hi = float(np.sum(grad_out * net.forward(x1.reshape(x.shape), cache=False)))
        x1[i] -= 2 * eps
        lo = float(np.sum(grad_out * net.forward(x1.reshape(x.shape), cache=False)))
        flat[i] = (hi - lo) / (2 * eps)
    return g


@pytest.mark.parametrize("acts", [None, ["tanh", "linear"], ["elu", "tanh"]])
def test_gradcheck_random_cases(acts):
    rng = np.random.default_rng(0)
    net = MLP([4, 6, 3], activations=acts, rng=rng)
    worst = 0.0
    for _ in range(100):
        x = rng.normal(size=(5, 4))
        go = rng.normal(size=(5, 3))
        net.forward(x)
        analytic, dx = net.backward(go)
        num = fd_param_grad(net, x, go)
        num_dx = fd_input_grad(net, x, go)
        denom = max(np.linalg.norm(num), 1e-12)
        worst = max(worst, np.linalg.norm(analytic - num) / denom)
        worst = max(worst, np.linalg.norm(dx - num_dx) / max(np.linalg.norm(num_dx), 1e-12))
    assert worst < 1e-4, worst


def test_hand_computed_two_layer_net():
    # 2-2-1 tanh/linear net with hand-set weights, checked against pencil math
    net = MLP([2, 2, 1], activations=["tanh", "linear"])
    net.weights[0] = np.array([[1.0, -1.0], [0.5, 2.0]])
    net.biases[0] = np.array([0.1, -0.2])
    net.weights[1] = np.array([[2.0, -3.0]])
    net.biases[1] = np.array([0.5])
    x = np.array([0.3, -0.4])
    z1 = np.array([1.0 * 0.3 - 1.0 * -0.4 + 0.1, 0.5 * 0.3 + 2.0 * -0.4 - 0.2])
    h1 = np.tanh(z1)
    expected = 2.0 * h1[0] - 3.0 * h1[1] + 0.5
    y = net.forward(x)
    assert y[0] == pytest.approx(expected, abs=1e-15)
    grads, dx = net.backward(np.array([1.0]))
    d1 = np.array([2.0, -3.0]) * (1.0 - h1 * h1)
    expected_dx = d1 @ np.array([[1.0, -1.0], [0.5, 2.0]])
    assert np.allclose(dx, expected_dx, atol=1e-15)
    # dW1 = d1 outer x, db1 = d1, dW2 = h1, db2 = 1
    expected_flat = np.concatenate([np.outer(d1, x).ravel(), d1, h1, [1.0]])
    assert np.allclose(grads, expected_flat, atol=1e-15)


def test_zero_grad_is_noop():
    rng = np.random.default_rng(1)
    net = MLP([3, 4, 2], rng=rng)
    x = rng.normal(size=3)
    net.forward(x)
    grads, dx = net.backward(np.zeros(2))
    assert np.all(grads == 0.0)
    assert np.all(dx == 0.0)


def test_param_roundtrip_and_count():
    rng = np.random.default_rng(2)
    net = MLP([5, 7, 3], rng=rng)
    assert net.num_params == 5 * 7 + 7 + 7 * 3 + 3
    p = net.get_params()
    other = MLP([5, 7, 3])
    other.set_params(p)
    x = rng.normal(size=5)
    assert np.array_equal(net.forward(x), other.forward(x))
    clone = net.copy()
    assert np.array_equal(clone.get_params(), p)
    clone.weights[0][0, 0] += 1.0
    assert np.array_equal(net.get_params(), p)  # deep copy


def test_adam_first_step_magnitude():
    # with bias correction, the first step is ~lr * sign(grad)
    opt = Adam(3, lr=0.01)
    params = np.zeros(3)
    new = opt.step(params, np.array([1.0, -5.0, 1e-3]))
    assert np.allclose(new, [-0.01, 0.01, -0.01], atol=1e-5)


def test_adam_determinism_and_descent():
    rng = np.random.default_rng(3)
    xs = rng.normal(size=(20, 4))
    teacher = MLP([4, 8, 1], rng=rng)
    target = teacher.forward(xs, cache=False)

    def run():
        net = MLP([4, 8, 1], rng=np.random.default_rng(4))
        opt = Adam(net.num_params, lr=1e-2)
        losses = []
        for _ in range(200):
            y = net.forward(xs)
            err = y - target
            losses.append(float(np.mean(err**2)))
            grads, _ = net.backward(2 * err / err.size)
            net.set_params(opt.step(net.get_params(), grads))
        return net.get_params(), losses

    p1, l1 = run()
    p2, l2 = run()
    assert np.array_equal(p1, p2)
    assert l1 == l2
    assert l1[-1] < 0.05 * l1[0]


def test_serialization_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    net = MLP([6, 5, 4], activations=["tanh", "linear"], rng=rng)
    blob = save_mlp(net)
    assert blob[:4] == b"PLAB"
    restored, consumed = load_mlp(blob)
    assert consumed == len(blob)
    assert restored.sizes == net.sizes
    assert restored.activations == net.activations
    assert np.array_equal(restored.get_params(), net.get_params())
    # two concatenated checkpoints parse sequentially
    restored2, consumed2 = load_mlp((blob + blob)[consumed:])
    assert np.array_equal(restored2.get_params(), net.get_params())
    path = tmp_path / "net.bin"
    save_mlp_file(net, str(path))
    from_file = load_mlp_file(str(path))
    assert np.array_equal(from_file.get_params(), net.get_params())


def test_error_cases():
    with pytest.raises(ValueError):
        MLP([3, 3], activations=["relu"])
    with pytest.raises(ValueError):
        MLP([3, 3, 3], activations=["elu"])
    net = MLP([3, 2])
    with pytest.raises(ValueError):
        net.set_params(np.zeros(5))
    with pytest.raises(ValueError):
        net.forward(np.zeros(4))
    with pytest.raises(RuntimeError):
        MLP([3, 2]).backward(np.zeros(2))
    with pytest.raises(ValueError):
        load_mlp(b"XXXX" + b"\x00" * 32)
    with pytest.raises(ValueError):
        Adam(3).step(np.zeros(4), np.zeros(4))
