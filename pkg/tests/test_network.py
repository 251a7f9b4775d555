"""Tests for the assembled network."""

import numpy as np
import pytest

from microsleep.architectures import build_cnn, build_cnn_lstm
from microsleep.layers import ShapeError, weighted_cross_entropy, weighted_cross_entropy_grad
from microsleep.network import Network


class TestForward:
    def test_cnn_output_is_distribution(self, small_cnn):
        x = np.random.default_rng(0).uniform(-1, 1, (5, 400, 3))
        probs = small_cnn.forward(x)
        assert probs.shape == (5, 4)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)

    def test_inference_is_deterministic(self, small_cnn):
        x = np.random.default_rng(0).uniform(-1, 1, (3, 400, 3))
        np.testing.assert_array_equal(small_cnn.forward(x), small_cnn.forward(x))

    def test_wrong_window(self, small_cnn):
        with pytest.raises(ShapeError, match="Expected windows"):
            small_cnn.forward(np.zeros((1, 399, 3)))

    def test_features_are_flatten_output(self, embedding_cnn):
        x = np.random.default_rng(1).uniform(-1, 1, (4, 400, 3))
        assert embedding_cnn.features(x).shape == (4, 64)

    def test_cnn_lstm_shapes(self):
        network = Network(build_cnn_lstm(), seed=0)
        x = np.random.default_rng(2).uniform(0, 1, (2, 6, 200, 3)).astype(np.float32)
        probs = network.forward(x)
        assert probs.shape == (2, 6, 2)
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, rtol=1e-5)

    def test_cnn_lstm_needs_sequences(self):
        with pytest.raises(ShapeError):
            Network(build_cnn_lstm()).forward(np.zeros((2, 200, 3)))

    def test_predict_batches(self, small_cnn):
        x = np.random.default_rng(3).uniform(-1, 1, (7, 400, 3))
        np.testing.assert_allclose(small_cnn.predict(x, batch_size=3), small_cnn.forward(x))


class TestTensors:
    def test_seeded_initialization(self):
        a = Network(build_cnn(2), seed=4).tensors()
        b = Network(build_cnn(2), seed=4).tensors()
        assert list(a) == list(b)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_names_are_indexed(self):
        names = list(Network(build_cnn(2)).parameters())
        assert names[0] == "01_Conv1D/kernel"
        assert "02_BatchNorm/gamma" in names

    def test_buffers_not_trainable(self):
        network = Network(build_cnn(2))
        assert set(network.buffers()).isdisjoint(network.parameters())
        assert all(name.endswith(("running_mean", "running_var")) for name in network.buffers())

    def test_load_tensors_shape_check(self):
        network = Network(build_cnn(2))
        tensors = network.tensors()
        tensors["01_Conv1D/kernel"] = np.zeros((3, 3, 9))
        with pytest.raises(ShapeError):
            network.load_tensors(tensors)

    def test_parameter_count_16s(self):
        assert Network(build_cnn(16)).parameter_count() > 200_000


class TestBackward:
    def test_network_gradient_matches_finite_differences(self, small_cnn):
        """Backprop through the whole 2-s CNN in training mode."""
        rng = np.random.default_rng(5)
        x = rng.uniform(-1, 1, (4, 400, 3))
        targets = np.array([0, 1, 2, 3])
        weights = np.array([1.0, 2.0, 0.5, 1.5])

        def loss():
            probs = small_cnn.forward(x, train=True, rng=np.random.default_rng(11))
            return weighted_cross_entropy(probs, targets, weights)

        probs = small_cnn.forward(x, train=True, rng=np.random.default_rng(11))
        small_cnn.backward(weighted_cross_entropy_grad(probs, targets, weights))
        grads = {k: v.copy() for k, v in small_cnn.gradients().items()}

        params = small_cnn.parameters()
        checked, close = 0, 0
        for name in ("01_Conv1D/kernel", "02_BatchNorm/gamma", "25_Conv1D/bias", "31_Dense/weights", "33_Dense/bias"):
            flat = params[name].reshape(-1)
            for i in rng.choice(flat.size, size=min(flat.size, 8), replace=False):
                old = flat[i]
                flat[i] = old + 1e-6
                plus = loss()
                flat[i] = old - 1e-6
                minus = loss()
                flat[i] = old
                numeric = (plus - minus) / 2e-6
                checked += 1
                close += np.isclose(grads[name].reshape(-1)[i], numeric, rtol=1e-4, atol=1e-8)
        assert checked == 36
        assert close / checked >= 0.95

    def test_cnn_lstm_gradient_over_ten_steps(self):
        """Backprop through the encoder, the LSTM over 10 windows and the per-step head."""
        network = Network(build_cnn_lstm(), seed=3, dtype=np.float64)
        rng = np.random.default_rng(6)
        x = rng.uniform(0, 1, (2, 10, 200, 3))
        targets = rng.integers(0, 2, (2, 10))
        weights = np.where(targets == 1, 3.0, 0.6)

        def loss():
            probs = network.forward(x, train=True, rng=np.random.default_rng(12))
            return weighted_cross_entropy(probs, targets, weights)

        probs = network.forward(x, train=True, rng=np.random.default_rng(12))
        network.backward(weighted_cross_entropy_grad(probs, targets, weights))
        grads = {k: v.copy() for k, v in network.gradients().items()}

        params = network.parameters()
        checked, close = 0, 0
        for name in ("01_Conv1D/kernel", "26_LSTM/kernel", "26_LSTM/recurrent", "26_LSTM/bias",
                     "27_Dense/weights"):
            flat = params[name].reshape(-1)
            for i in rng.choice(flat.size, size=6, replace=False):
                old = flat[i]
                flat[i] = old + 1e-6
                plus = loss()
                flat[i] = old - 1e-6
                minus = loss()
                flat[i] = old
                numeric = (plus - minus) / 2e-6
                checked += 1
                close += np.isclose(grads[name].reshape(-1)[i], numeric, rtol=1e-4, atol=1e-8)
        assert close / checked >= 0.95
