import numpy as np
import pytest

from core2.nets import DenseNet, assemble_input, timestep_embedding
from core2.optim import AdamW
from helpers import assert_grads_close, central_diff_grad


def small_net(seed=0, activation="tanh"):
    return DenseNet([6, 10, 9, 5], activation=activation, seed=seed)


class TestForward:
    def test_zero_final_layer_outputs_zero(self):
        net = small_net()
        net.weights[-1][:] = 0.0
        net.biases[-1][:] = 0.0
        rng = np.random.default_rng(0)
        assert np.array_equal(net.forward(rng.normal(size=6)), np.zeros(5))

    def test_deterministic(self):
        net = small_net(3)
        x = np.random.default_rng(1).normal(size=(4, 6))
        assert np.array_equal(net.forward(x), net.forward(x))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="width"):
            small_net().forward(np.zeros(7))

    @pytest.mark.parametrize("activation", ["tanh", "silu"])
    def test_jacobian_vs_finite_difference(self, activation):
        # directional derivative of u . f(x) wrt every weight, O(delta^2)
        net = small_net(5, activation)
        rng = np.random.default_rng(2)
        x = rng.normal(size=6)
        u = rng.normal(size=5)

        def f():
            return float(net.forward(x) @ u)

        out, cache = net.forward_cached(x)
        layer_grads, _, _ = net.backward(cache, u)
        analytic = []
        for dw, db in layer_grads:
            analytic += [dw, db]
        numeric = central_diff_grad(f, net.parameters(), h=1e-5)
        assert_grads_close(analytic, numeric, rtol=1e-6, atol=1e-9)

    def test_input_gradient(self):
        net = small_net(7)
        rng = np.random.default_rng(3)
        x = rng.normal(size=6)
        u = rng.normal(size=5)
        _, cache = net.forward_cached(x)
        _, _, dx = net.backward(cache, u)

        def f():
            return float(net.forward(x) @ u)

        numeric = central_diff_grad(f, [x], h=1e-6)[0]
        assert np.max(np.abs(dx - numeric)) < 1e-7


class TestLowRankDeltas:
    def test_delta_matches_dense_materialization(self):
        net = small_net(11)
        rng = np.random.default_rng(4)
        deltas = []
        for w in net.weights:
            a = rng.normal(size=(3, w.shape[1]))
            b = rng.normal(size=(w.shape[0], 3))
            deltas.append((a, b))
        x = rng.normal(size=(5, 6))
        via_delta = net.forward(x, deltas=deltas)
        dense = DenseNet(net.sizes, seed=0)
        dense.weights = [w + b @ a for w, (a, b) in zip(net.weights, deltas)]
        dense.biases = [b.copy() for b in net.biases]
        assert np.max(np.abs(via_delta - dense.forward(x))) < 1e-12

    def test_delta_gradients_match_finite_difference(self):
        net = small_net(12)
        rng = np.random.default_rng(5)
        deltas = [None, (rng.normal(size=(2, 10)), rng.normal(size=(9, 2))), None]
        x = rng.normal(size=(3, 6))
        target = rng.normal(size=(3, 5))

        def loss():
            r = net.forward(x, deltas=deltas) - target
            return float(np.sum(r * r))

        out, cache = net.forward_cached(x, deltas=deltas)
        layer_grads, delta_grads, _ = net.backward(cache, 2.0 * (out - target), deltas=deltas)
        analytic = []
        params = []
        for dw, db in layer_grads:
            analytic += [dw, db]
        for p in net.parameters():
            params.append(p)
        analytic += [delta_grads[1][0], delta_grads[1][1]]
        params += [deltas[1][0], deltas[1][1]]
        numeric = central_diff_grad(loss, params, h=1e-5)
        assert_grads_close(analytic, numeric, rtol=1e-5, atol=1e-8)


class TestTimestepEmbedding:
    def test_bounds_and_shape(self):
        emb = timestep_embedding(np.arange(29), 28, 32)
        assert emb.shape == (29, 32)
        assert np.all(np.abs(emb) <= 1.0)

    def test_odd_dim_rejected(self):
        with pytest.raises(ValueError, match="even"):
            timestep_embedding(1, 10, 7)

    def test_assemble_broadcasts(self):
        x = np.zeros((4, 6))
        out = assemble_input(x, 3, np.ones(8), 10, 4)
        assert out.shape == (4, 18)


class TestAdamW:
    def test_pure_decay_shrinks_parameters(self):
        rng = np.random.default_rng(6)
        p = rng.normal(size=(4, 3))
        params = [p]
        opt = AdamW(params, learning_rate=1e-2, horizon=100, weight_decay=0.1)
        norms = [np.linalg.norm(p)]
        for _ in range(10):
            opt.step(params, [np.zeros_like(p)])
            norms.append(np.linalg.norm(p))
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_cosine_decay_hits_zero(self):
        opt = AdamW([np.zeros(1)], learning_rate=1.0, horizon=10)
        assert opt.lr_at(0) == 1.0
        assert abs(opt.lr_at(5) - 0.5) < 1e-12
        assert opt.lr_at(10) < 1e-15

    def test_descends_a_quadratic(self):
        p = np.array([3.0, -2.0])
        params = [p]
        opt = AdamW(params, learning_rate=0.2, horizon=200, weight_decay=0.0)
        for _ in range(200):
            opt.step(params, [2.0 * p])
        assert np.linalg.norm(p) < 1e-2
