import numpy as np
import pytest

from uavsem.nn import ACTIVATIONS, Adam, DenseNet, NonFiniteGradient


def make_net(sizes, acts, seed=0, dtype=np.float64):
    return DenseNet(sizes, acts, np.random.default_rng(seed), dtype=dtype)


class TestForward:
    def test_identity_linear_layer(self):
        net = make_net([3, 3], ["linear"])
        net.weights[0][...] = np.eye(3)
        net.biases[0][...] = 0.0
        x = np.array([1.5, -2.0, 0.25])
        assert np.array_equal(net.forward(x), x)

    def test_zero_weights_output_activation_of_bias(self):
        net = make_net([4, 2], ["tanh"])
        net.weights[0][...] = 0.0
        net.biases[0][...] = np.array([0.5, -1.0])
        out = net.forward(np.ones(4))
        assert np.allclose(out, np.tanh([0.5, -1.0]))

    def test_two_layer_against_hand_matrix_algebra(self):
        net = make_net([3, 5, 2], ["relu", "linear"], seed=3)
        rng = np.random.default_rng(9)
        x = rng.normal(size=(7, 3))
        h = np.maximum(x @ net.weights[0] + net.biases[0], 0.0)
        want = h @ net.weights[1] + net.biases[1]
        assert np.max(np.abs(net.forward(x) - want)) < 1e-12

    def test_shape_mismatch_faults(self):
        net = make_net([3, 2], ["linear"])
        with pytest.raises(ValueError):
            net.forward(np.ones(4))

    def test_finite_in_finite_out(self):
        net = make_net([6, 32, 32, 4], ["relu", "tanh", "softplus"], seed=1)
        out = net.forward(np.random.default_rng(0).normal(size=(100, 6)) * 50)
        assert np.all(np.isfinite(out))


def finite_difference_grads(net, x, grad_out, h=1e-5):
    """Central differences of sum(grad_out * forward(x)) per parameter."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            up = float(np.sum(grad_out * net.forward(x)))
            p[idx] = orig - h
            down = float(np.sum(grad_out * net.forward(x)))
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


class TestBackward:
    @pytest.mark.parametrize("acts", [
        ["linear"], ["relu", "linear"], ["tanh", "linear"],
        ["softplus", "tanh"], ["relu", "softplus", "linear"],
    ])
    def test_gradients_match_finite_differences(self, acts):
        sizes = [3] + [6] * (len(acts) - 1) + [2]
        net = make_net(sizes, acts, seed=len(acts))
        rng = np.random.default_rng(11)
        x = rng.normal(size=(4, 3))
        grad_out = rng.normal(size=(4, 2))
        out, cache = net.forward_cached(x)
        analytic, _ = net.backward(cache, grad_out)
        numeric = finite_difference_grads(net, x, grad_out)
        flat_analytic = np.concatenate([g.ravel() for pair in analytic for g in pair])
        flat_numeric = np.concatenate([g.ravel() for g in numeric])
        denom = np.maximum(np.abs(flat_numeric), 1e-6)
        assert np.max(np.abs(flat_analytic - flat_numeric) / denom) < 1e-4

    def test_input_gradient_matches_finite_differences(self):
        net = make_net([3, 8, 2], ["tanh", "linear"], seed=5)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(1, 3))
        grad_out = rng.normal(size=(1, 2))
        _, cache = net.forward_cached(x)
        _, g_in = net.backward(cache, grad_out)
        h = 1e-6
        for i in range(3):
            xp, xm = x.copy(), x.copy()
            xp[0, i] += h
            xm[0, i] -= h
            numeric = (np.sum(grad_out * net.forward(xp))
                       - np.sum(grad_out * net.forward(xm))) / (2 * h)
            assert g_in[0, i] == pytest.approx(numeric, rel=1e-4, abs=1e-8)

    def test_zero_output_gradient_gives_zero_grads(self):
        net = make_net([3, 4, 2], ["relu", "linear"])
        out, cache = net.forward_cached(np.ones((2, 3)))
        grads, g_in = net.backward(cache, np.zeros((2, 2)))
        assert all(np.all(dw == 0) and np.all(db == 0) for dw, db in grads)
        assert np.all(g_in == 0)

    def test_linear_net_weight_gradient_is_input(self):
        net = make_net([3, 1], ["linear"])
        x = np.array([[2.0, -1.0, 0.5]])
        _, cache = net.forward_cached(x)
        grads, _ = net.backward(cache, np.array([[1.0]]))
        assert np.allclose(grads[0][0].ravel(), x.ravel())


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        net = make_net([2, 2], ["linear"])
        before = [p.copy() for p in net.parameters()]
        opt = Adam(net.parameters(), lr=1e-3)
        opt.step(net.parameters(), [np.zeros_like(p) for p in net.parameters()])
        for p, b in zip(net.parameters(), before):
            assert np.array_equal(p, b)

    def test_constant_gradient_moves_against_it(self):
        p = [np.array([1.0])]
        opt = Adam(p, lr=1e-2)
        for _ in range(50):
            opt.step(p, [np.array([2.0])])
        assert p[0][0] < 1.0

    def test_converges_on_quadratic(self):
        # min (x - 3)^2 / 2, gradient x - 3.
        p = [np.array([10.0])]
        opt = Adam(p, lr=1e-2)
        for _ in range(10_000):
            opt.step(p, [p[0] - 3.0])
            if abs(p[0][0] - 3.0) < 1e-6:
                break
        assert abs(p[0][0] - 3.0) < 1e-6

    def test_zero_learning_rate_freezes(self):
        p = [np.array([1.0, 2.0])]
        opt = Adam(p, lr=0.0)
        opt.step(p, [np.array([5.0, -7.0])])
        assert np.array_equal(p[0], [1.0, 2.0])

    def test_non_finite_gradient_faults_with_diagnostics(self):
        p = [np.array([1.0])]
        opt = Adam(p, lr=1e-3)
        with pytest.raises(NonFiniteGradient, match="parameter 0"):
            opt.step(p, [np.array([np.nan])])


class TestSerialization:
    def test_round_trip_preserves_outputs_bitwise(self, tmp_path):
        net = make_net([5, 16, 3], ["relu", "tanh"], seed=4, dtype=np.float32)
        path = tmp_path / "net.npz"
        net.save(path)
        twin = DenseNet.load(path)
        x = np.random.default_rng(1).normal(size=(10, 5))
        assert np.array_equal(net.forward(x), twin.forward(x))
        assert twin.sizes == net.sizes and twin.activations == net.activations

    def test_version_check(self, tmp_path):
        net = make_net([2, 2], ["linear"])
        path = tmp_path / "net.npz"
        net.save(path)
        data = dict(np.load(path, allow_pickle=False))
        data["version"] = np.array(99)
        np.savez(path, **data)
        with pytest.raises(ValueError, match="version"):
            DenseNet.load(path)

    def test_clone_is_independent(self):
        net = make_net([2, 3], ["linear"])
        twin = net.clone()
        net.weights[0][0, 0] += 1.0
        assert twin.weights[0][0, 0] != net.weights[0][0, 0]


def test_unknown_activation_rejected():
    with pytest.raises(ValueError):
        make_net([2, 2], ["sigmoid"])
    assert "relu" in ACTIVATIONS
