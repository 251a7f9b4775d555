"""Tests for the layer engine: forward semantics and finite-difference gradient checks."""

import numpy as np
import pytest

from microsleep.layers import (
    LSTM, BackwardError, BatchNorm, Conv1D, Dense, Dropout, Flatten, GaussianNoise, MaxPool, ReLU,
    ShapeError, Softmax, batch_norm, conv1d, dense, glorot_normal_init, lstm_sequence, max_pool,
    softmax, weighted_cross_entropy, weighted_cross_entropy_grad,
)

EPS = 1e-6
TOLERANCE = 1e-5


def _close(analytic, numeric):
    return np.isclose(analytic, numeric, rtol=TOLERANCE, atol=1e-7)


def _sample_indices(shape, rng, limit=25):
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(size, limit), replace=False)
    return [np.unravel_index(i, shape) for i in flat]


def _check_layer(layer, x, train=True, seed=0):
    """Compare backward() against central differences of sum(out * R)."""
    rng = np.random.default_rng(seed)
    out = layer.forward(x, train, np.random.default_rng(99))
    R = rng.normal(size=out.shape)
    grad_x = layer.backward(R)

    def loss():
        return float(np.sum(layer.forward(x, train, np.random.default_rng(99)) * R))

    for idx in _sample_indices(x.shape, rng):
        old = x[idx]
        x[idx] = old + EPS
        plus = loss()
        x[idx] = old - EPS
        minus = loss()
        x[idx] = old
        assert _close(grad_x[idx], (plus - minus) / (2 * EPS)), f"input {idx}"

    for name, param in layer.params.items():
        analytic = layer.grads[name]
        for idx in _sample_indices(param.shape, rng):
            old = param[idx]
            param[idx] = old + EPS
            plus = loss()
            param[idx] = old - EPS
            minus = loss()
            param[idx] = old
            assert _close(analytic[idx], (plus - minus) / (2 * EPS)), f"{name} {idx}"


# ---------------------------------------------------------------------------
# Forward semantics
# ---------------------------------------------------------------------------
class TestFunctionalForms:
    def test_conv1d_cross_correlation(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(10, 2))
        kernel = rng.normal(size=(3, 2, 4))
        bias = rng.normal(size=4)
        out = conv1d(x, kernel, bias)
        assert out.shape == (8, 4)
        expected = np.array([
            [bias[o] + sum(kernel[d, c, o] * x[t + d, c] for d in range(3) for c in range(2))
             for o in range(4)]
            for t in range(8)
        ])
        np.testing.assert_allclose(out, expected)

    def test_conv1d_same_padding_keeps_length(self):
        x = np.ones((1, 5, 2))
        out = conv1d(x, np.ones((3, 2, 1)), np.zeros(1), padding="same")
        np.testing.assert_allclose(out[0, :, 0], [4, 6, 6, 6, 4])

    def test_conv1d_too_short(self):
        with pytest.raises(ShapeError):
            conv1d(np.ones((2, 1)), np.ones((3, 1, 1)), np.zeros(1))

    def test_max_pool_drops_remainder(self):
        x = np.array([[1.0], [3.0], [2.0], [0.0], [9.0]])
        np.testing.assert_array_equal(max_pool(x)[:, 0], [3.0, 2.0])

    def test_softmax_rows(self):
        p = softmax(np.array([[1000.0, 1000.0], [0.0, np.log(3.0)]]))
        np.testing.assert_allclose(p, [[0.5, 0.5], [0.25, 0.75]])

    def test_batch_norm_inference_uses_running_stats(self):
        x = np.array([[2.0], [4.0]])
        out, mean, var = batch_norm(x, np.ones(1), np.zeros(1), np.array([1.0]), np.array([4.0]), False)
        np.testing.assert_allclose(out[:, 0], np.array([1.0, 3.0]) / np.sqrt(4.0 + 1e-3))
        assert mean[0] == 1.0 and var[0] == 4.0

    def test_batch_norm_train_updates_running_stats(self):
        x = np.array([[2.0], [4.0]])
        _, mean, var = batch_norm(x, np.ones(1), np.zeros(1), np.zeros(1), np.ones(1), True)
        assert mean[0] == pytest.approx(0.01 * 3.0)
        assert var[0] == pytest.approx(0.99 + 0.01 * 1.0)

    def test_dense(self):
        np.testing.assert_allclose(dense(np.array([[1.0, 2.0]]), np.eye(2), np.array([1.0, 0.0])), [[2.0, 2.0]])

    def test_glorot_variance(self):
        w = glorot_normal_init((200, 300), 200, 300, np.random.default_rng(0), np.float64)
        assert w.std() == pytest.approx(np.sqrt(2.0 / 500), rel=0.02)

    def test_lstm_batched_matches_unbatched(self):
        rng = np.random.default_rng(1)
        kernel, recurrent = rng.normal(size=(3, 8)), rng.normal(size=(2, 8))
        bias = rng.normal(size=8)
        x = rng.normal(size=(2, 5, 3))
        batched = lstm_sequence(x, kernel, recurrent, bias)
        for b in range(2):
            np.testing.assert_allclose(lstm_sequence(x[b], kernel, recurrent, bias), batched[b])

    def test_lstm_state_bounded(self):
        rng = np.random.default_rng(2)
        h = lstm_sequence(rng.normal(size=(50, 3)) * 10, rng.normal(size=(3, 8)),
                          rng.normal(size=(2, 8)), np.zeros(8))
        assert np.all(np.abs(h) <= 1.0)


class TestWeightedCrossEntropy:
    def test_value(self):
        probs = np.array([[0.5, 0.5], [0.25, 0.75]])
        loss = weighted_cross_entropy(probs, np.array([0, 1]), np.array([2.0, 1.0]))
        assert loss == pytest.approx((2.0 * np.log(2.0) + np.log(4.0 / 3.0)) / 2)

    def test_floor(self):
        loss = weighted_cross_entropy(np.array([[1.0, 0.0]]), np.array([1]), np.array([1.0]))
        assert loss == pytest.approx(-np.log(1e-12))

    def test_gradient(self):
        rng = np.random.default_rng(3)
        probs = softmax(rng.normal(size=(4, 3)))
        targets = np.array([0, 2, 1, 2])
        weights = np.array([1.0, 0.5, 2.0, 1.5])
        grad = weighted_cross_entropy_grad(probs, targets, weights)
        for i in range(4):
            for k in range(3):
                bumped = probs.copy()
                bumped[i, k] += EPS
                lowered = probs.copy()
                lowered[i, k] -= EPS
                numeric = (weighted_cross_entropy(bumped, targets, weights)
                           - weighted_cross_entropy(lowered, targets, weights)) / (2 * EPS)
                assert grad[i, k] == pytest.approx(numeric, rel=1e-5, abs=1e-9)


# ---------------------------------------------------------------------------
# Gradient checks
# ---------------------------------------------------------------------------
class TestGradients:
    def test_conv_valid(self):
        rng = np.random.default_rng(0)
        _check_layer(Conv1D(3, 4, rng, dtype=np.float64), rng.normal(size=(2, 9, 3)))

    def test_conv_same(self):
        rng = np.random.default_rng(1)
        _check_layer(Conv1D(2, 3, rng, padding="same", dtype=np.float64), rng.normal(size=(2, 4, 2)))

    def test_batch_norm_train(self):
        rng = np.random.default_rng(2)
        layer = BatchNorm(3, dtype=np.float64)
        layer.params["gamma"] = rng.uniform(0.5, 1.5, 3)
        layer.params["beta"] = rng.normal(size=3)
        _check_layer(layer, rng.normal(size=(4, 5, 3)), train=True)

    def test_batch_norm_inference(self):
        rng = np.random.default_rng(3)
        layer = BatchNorm(3, dtype=np.float64)
        layer.state["running_var"] = rng.uniform(0.5, 2.0, 3)
        x = rng.normal(size=(4, 5, 3))
        out = layer.forward(x, False)
        grad = layer.backward(np.ones_like(out))
        np.testing.assert_allclose(grad, np.broadcast_to(1.0 / np.sqrt(layer.state["running_var"] + 1e-3), x.shape))

    def test_max_pool(self):
        rng = np.random.default_rng(4)
        _check_layer(MaxPool(2), rng.normal(size=(2, 7, 3)))

    def test_max_pool_tie_goes_to_first(self):
        layer = MaxPool(2)
        layer.forward(np.array([[[1.0], [1.0]]]))
        np.testing.assert_array_equal(layer.backward(np.array([[[5.0]]]))[0, :, 0], [5.0, 0.0])

    def test_relu(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 4))
        x[np.abs(x) < 0.01] = 0.5
        _check_layer(ReLU(), x)

    def test_dense(self):
        rng = np.random.default_rng(6)
        _check_layer(Dense(5, 3, rng, dtype=np.float64), rng.normal(size=(4, 5)))

    def test_dense_on_sequences(self):
        rng = np.random.default_rng(7)
        _check_layer(Dense(5, 2, rng, dtype=np.float64), rng.normal(size=(2, 3, 5)))

    def test_softmax(self):
        rng = np.random.default_rng(8)
        _check_layer(Softmax(), rng.normal(size=(3, 4)))

    def test_flatten(self):
        rng = np.random.default_rng(9)
        _check_layer(Flatten(), rng.normal(size=(2, 1, 6)))

    def test_dropout(self):
        rng = np.random.default_rng(10)
        _check_layer(Dropout(0.5), rng.normal(size=(6, 8)), train=True)

    def test_gaussian_noise(self):
        rng = np.random.default_rng(11)
        _check_layer(GaussianNoise(0.1), rng.normal(size=(3, 4, 2)), train=True)

    def test_lstm(self):
        rng = np.random.default_rng(12)
        _check_layer(LSTM(3, 4, rng, dtype=np.float64), rng.normal(size=(2, 6, 3)))


# ---------------------------------------------------------------------------
# Layer behavior
# ---------------------------------------------------------------------------
class TestLayerBehavior:
    def test_backward_without_forward(self):
        with pytest.raises(BackwardError):
            Dense(2, 2, np.random.default_rng(0)).backward(np.ones((1, 2)))

    def test_dropout_needs_generator(self):
        with pytest.raises(ValueError, match="generator"):
            Dropout(0.5).forward(np.ones((2, 2)), train=True)

    def test_dropout_inference_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(Dropout(0.5).forward(x, train=False), x)

    def test_dropout_scaling(self):
        out = Dropout(0.5).forward(np.ones((200, 200)), True, np.random.default_rng(0))
        assert set(np.unique(out)) == {0.0, 2.0}
        assert out.mean() == pytest.approx(1.0, abs=0.02)

    def test_noise_only_in_training(self):
        x = np.zeros((2, 3))
        np.testing.assert_array_equal(GaussianNoise(1.0).forward(x, False), x)
        assert np.any(GaussianNoise(1.0).forward(x, True, np.random.default_rng(0)) != 0)

    def test_noise_variance(self):
        """A million draws at the training std have variance std**2 within 5%."""
        x = np.full((1000, 1000), 0.25)
        out = GaussianNoise(0.0005).forward(x, True, np.random.default_rng(4))
        assert np.var(out - x) == pytest.approx(0.0005 ** 2, rel=0.05)

    def test_lstm_forget_bias(self):
        layer = LSTM(3, 4, np.random.default_rng(0))
        np.testing.assert_array_equal(layer.params["bias"][4:8], 1.0)
        np.testing.assert_array_equal(layer.params["bias"][:4], 0.0)

    def test_conv_channel_mismatch(self):
        with pytest.raises(ShapeError):
            Conv1D(3, 2, np.random.default_rng(0)).forward(np.ones((1, 5, 2)))
