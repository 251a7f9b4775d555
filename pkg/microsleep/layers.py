"""
Differentiable layer engine for the fixed layer vocabulary of the segmenters.

Each op exists as a plain function (forward only) and as a Layer class that
caches what its backward pass needs. Arrays are (batch, time, channels) for
the convolutional stages, (batch, features) after flattening and
(batch, steps, features) around the LSTM.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

BN_EPSILON = 1e-3
BN_MOMENTUM = 0.99
PROB_FLOOR = 1e-12


class ShapeError(ValueError):
    """Input shape does not fit the layer."""


class BackwardError(RuntimeError):
    """backward() called without a matching forward()."""


# ---------------------------------------------------------------------------
# Functional forms
# ---------------------------------------------------------------------------
def glorot_normal_init(shape, fan_in: int, fan_out: int, rng: np.random.Generator,
                       dtype=np.float32) -> np.ndarray:
    """Zero-mean normal samples with variance 2 / (fan_in + fan_out)."""
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError(f"Fans must be positive, got {fan_in}, {fan_out}")
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=shape).astype(dtype)


def _as_batch(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if x.ndim == ndim - 1:
        return x[None], True
    return x, False


def conv1d(inputs, kernel, bias, padding: str = "valid") -> np.ndarray:
    """
    Stride-1 cross-correlation.

    out[t, o] = bias[o] + sum_{d, c} kernel[d, c, o] * input[t + d, c]
    """
    x, squeeze = _as_batch(inputs, 3)
    if padding == "same":
        half = kernel.shape[0] // 2
        x = np.pad(x, ((0, 0), (half, kernel.shape[0] - 1 - half), (0, 0)))
    taps = kernel.shape[0]
    length = x.shape[1] - taps + 1
    if length < 1:
        raise ShapeError(f"Convolution needs at least {taps} samples, got {x.shape[1]}")
    out = x[:, 0:length] @ kernel[0]
    for d in range(1, taps):
        out += x[:, d:d + length] @ kernel[d]
    out += bias
    return out[0] if squeeze else out


def batch_norm(inputs, gamma, beta, running_mean, running_var, train: bool,
               eps: float = BN_EPSILON, momentum: float = BN_MOMENTUM):
    """
    Normalize per channel (last axis).

    Returns (output, new_running_mean, new_running_var). Train mode uses the
    batch statistics over every axis but the last and moves the running
    statistics by `momentum`; inference uses the running statistics.
    """
    x = np.asarray(inputs)
    if train:
        axes = tuple(range(x.ndim - 1))
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean = momentum * running_mean + (1.0 - momentum) * mean
        running_var = momentum * running_var + (1.0 - momentum) * var
    else:
        mean, var = running_mean, running_var
    out = gamma * (x - mean) / np.sqrt(var + eps) + beta
    return out, running_mean, running_var


def relu(inputs) -> np.ndarray:
    return np.maximum(inputs, 0)


def max_pool(inputs, size: int = 2) -> np.ndarray:
    """Non-overlapping max over `size` samples; a trailing remainder is dropped."""
    x, squeeze = _as_batch(inputs, 3)
    m = x.shape[1] // size
    if m < 1:
        raise ShapeError(f"Pooling needs at least {size} samples, got {x.shape[1]}")
    out = x[:, :m * size].reshape(x.shape[0], m, size, x.shape[2]).max(axis=2)
    return out[0] if squeeze else out


def dense(inputs, weights, bias) -> np.ndarray:
    return np.asarray(inputs) @ weights + bias


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def dropout(inputs, rate: float, train: bool, rng: np.random.Generator | None = None) -> np.ndarray:
    if not 0 <= rate < 1:
        raise ValueError(f"Dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(inputs)
    if not train or rate == 0:
        return x
    keep = rng.random(x.shape) >= rate
    return x * keep / (1.0 - rate)


def gaussian_noise(inputs, std: float, train: bool, rng: np.random.Generator | None = None) -> np.ndarray:
    if std < 0:
        raise ValueError(f"Noise std must be non-negative, got {std}")
    x = np.asarray(inputs)
    if not train or std == 0:
        return x
    return x + rng.normal(0.0, std, size=x.shape).astype(x.dtype)


def lstm_sequence(inputs, kernel, recurrent, bias, h0=None, c0=None, return_cache: bool = False):
    """
    Run an LSTM over (batch, steps, features) or (steps, features).

    Gates are packed as [input, forget, candidate, output] along the last
    axis of kernel/recurrent/bias. The initial state is zero unless given.
    """
    x, squeeze = _as_batch(inputs, 3)
    b, steps, _ = x.shape
    units = recurrent.shape[0]
    dtype = np.result_type(x, kernel)
    h = np.zeros((b, units), dtype=dtype) if h0 is None else np.broadcast_to(h0, (b, units)).astype(dtype)
    c = np.zeros((b, units), dtype=dtype) if c0 is None else np.broadcast_to(c0, (b, units)).astype(dtype)

    projected = x @ kernel + bias
    hs = np.empty((b, steps, units), dtype=dtype)
    cache = {
        "x": x, "h_prev": np.empty((steps, b, units), dtype=dtype),
        "c_prev": np.empty((steps, b, units), dtype=dtype),
        "gates": np.empty((steps, b, 4 * units), dtype=dtype),
        "c": np.empty((steps, b, units), dtype=dtype),
    }
    for t in range(steps):
        z = projected[:, t] + h @ recurrent
        i = expit(z[:, :units])
        f = expit(z[:, units:2 * units])
        g = np.tanh(z[:, 2 * units:3 * units])
        o = expit(z[:, 3 * units:])
        cache["h_prev"][t] = h
        cache["c_prev"][t] = c
        c = f * c + i * g
        h = o * np.tanh(c)
        cache["gates"][t] = np.concatenate([i, f, g, o], axis=1)
        cache["c"][t] = c
        hs[:, t] = h

    out = hs[0] if squeeze else hs
    if return_cache:
        return out, cache
    return out


def weighted_cross_entropy(probs, targets, weights) -> float:
    """Mean over all positions of -w(target) * log(max(p_target, 1e-12))."""
    p = np.asarray(probs)
    t = np.asarray(targets, dtype=np.intp)
    picked = np.take_along_axis(p, t[..., None], axis=-1)[..., 0]
    return float(np.mean(-np.asarray(weights) * np.log(np.maximum(picked, PROB_FLOOR))))


def weighted_cross_entropy_grad(probs, targets, weights) -> np.ndarray:
    """d loss / d probs for weighted_cross_entropy."""
    p = np.asarray(probs)
    t = np.asarray(targets, dtype=np.intp)[..., None]
    picked = np.take_along_axis(p, t, axis=-1)
    count = t.size
    w = np.asarray(weights, dtype=p.dtype)[..., None]
    slope = np.where(picked > PROB_FLOOR, -w / (count * np.maximum(picked, PROB_FLOOR)), 0.0)
    grad = np.zeros_like(p)
    np.put_along_axis(grad, t, slope.astype(p.dtype), axis=-1)
    return grad


# ---------------------------------------------------------------------------
# Layers with cached backward passes
# ---------------------------------------------------------------------------
class Layer:
    kind = "Layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x, train: bool = False, rng: np.random.Generator | None = None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def output_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def _take_cache(self):
        if self._cache is None:
            raise BackwardError(f"{self.kind}.backward() without a matching forward()")
        cache, self._cache = self._cache, None
        return cache

    def astype(self, dtype) -> None:
        for store in (self.params, self.state):
            for name in store:
                store[name] = store[name].astype(dtype)


class GaussianNoise(Layer):
    kind = "GaussianNoise"

    def __init__(self, std: float):
        super().__init__()
        self.std = std

    def forward(self, x, train=False, rng=None):
        if train and self.std > 0 and rng is None:
            raise ValueError("GaussianNoise needs a generator in train mode")
        self._cache = True
        return gaussian_noise(x, self.std, train, rng)

    def backward(self, grad):
        self._take_cache()
        return grad


class Conv1D(Layer):
    kind = "Conv1D"

    def __init__(self, in_channels: int, filters: int, rng: np.random.Generator,
                 kernel_size: int = 3, padding: str = "valid", dtype=np.float32):
        super().__init__()
        if padding not in ("valid", "same"):
            raise ValueError(f"Unknown padding {padding!r}")
        self.padding = padding
        self.kernel_size = kernel_size
        self.params["kernel"] = glorot_normal_init(
            (kernel_size, in_channels, filters),
            kernel_size * in_channels, kernel_size * filters, rng, dtype,
        )
        self.params["bias"] = np.zeros(filters, dtype=dtype)

    def output_shape(self, in_shape):
        length, _ = in_shape
        if self.padding == "valid":
            length -= self.kernel_size - 1
        return length, self.params["kernel"].shape[2]

    def forward(self, x, train=False, rng=None):
        kernel = self.params["kernel"]
        if x.shape[-1] != kernel.shape[1]:
            raise ShapeError(f"Conv1D expects {kernel.shape[1]} input channels, got {x.shape[-1]}")
        padded = x
        if self.padding == "same":
            half = self.kernel_size // 2
            padded = np.pad(x, ((0, 0), (half, self.kernel_size - 1 - half), (0, 0)))
        out = conv1d(padded, kernel, self.params["bias"])
        self._cache = padded
        return out

    def backward(self, grad):
        padded = self._take_cache()
        kernel = self.params["kernel"]
        length = grad.shape[1]
        d_kernel = np.empty_like(kernel)
        d_padded = np.zeros_like(padded)
        for d in range(self.kernel_size):
            window = padded[:, d:d + length]
            d_kernel[d] = np.tensordot(window, grad, axes=([0, 1], [0, 1]))
            d_padded[:, d:d + length] += grad @ kernel[d].T
        self.grads["kernel"] = d_kernel
        self.grads["bias"] = grad.sum(axis=(0, 1))
        if self.padding == "same":
            half = self.kernel_size // 2
            return d_padded[:, half:d_padded.shape[1] - (self.kernel_size - 1 - half)]
        return d_padded


class BatchNorm(Layer):
    kind = "BatchNorm"

    def __init__(self, channels: int, eps: float = BN_EPSILON, momentum: float = BN_MOMENTUM,
                 dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.state["running_mean"] = np.zeros(channels, dtype=dtype)
        self.state["running_var"] = np.ones(channels, dtype=dtype)

    def forward(self, x, train=False, rng=None):
        gamma, beta = self.params["gamma"], self.params["beta"]
        if not train:
            out, _, _ = batch_norm(x, gamma, beta, self.state["running_mean"],
                                   self.state["running_var"], False, self.eps, self.momentum)
            self._cache = ("infer", 1.0 / np.sqrt(self.state["running_var"] + self.eps), None)
            return out
        axes = tuple(range(x.ndim - 1))
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        m = self.momentum
        self.state["running_mean"] = (m * self.state["running_mean"] + (1 - m) * mean).astype(x.dtype)
        self.state["running_var"] = (m * self.state["running_var"] + (1 - m) * var).astype(x.dtype)
        self._cache = ("train", inv_std, x_hat)
        return gamma * x_hat + beta

    def backward(self, grad):
        mode, inv_std, x_hat = self._take_cache()
        gamma = self.params["gamma"]
        axes = tuple(range(grad.ndim - 1))
        self.grads["beta"] = grad.sum(axis=axes)
        if mode == "infer":
            # running statistics are constants here
            self.grads["gamma"] = np.zeros_like(gamma)
            return grad * gamma * inv_std
        self.grads["gamma"] = (grad * x_hat).sum(axis=axes)
        count = grad.size // grad.shape[-1]
        d_hat = grad * gamma
        return inv_std / count * (
            count * d_hat - d_hat.sum(axis=axes) - x_hat * (d_hat * x_hat).sum(axis=axes)
        )


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x, train=False, rng=None):
        self._cache = x > 0
        return relu(x)

    def backward(self, grad):
        return grad * self._take_cache()


class MaxPool(Layer):
    kind = "MaxPool"

    def __init__(self, size: int = 2):
        super().__init__()
        self.size = size

    def output_shape(self, in_shape):
        length, channels = in_shape
        return length // self.size, channels

    def forward(self, x, train=False, rng=None):
        b, length, channels = x.shape
        m = length // self.size
        if m < 1:
            raise ShapeError(f"Pooling needs at least {self.size} samples, got {length}")
        grouped = x[:, :m * self.size].reshape(b, m, self.size, channels)
        # argmax picks the first maximum, which routes the gradient on ties
        winner = grouped.argmax(axis=2)
        self._cache = (x.shape, winner)
        return np.take_along_axis(grouped, winner[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(self, grad):
        shape, winner = self._take_cache()
        b, length, channels = shape
        m = winner.shape[1]
        grouped = np.zeros((b, m, self.size, channels), dtype=grad.dtype)
        np.put_along_axis(grouped, winner[:, :, None, :], grad[:, :, None, :], axis=2)
        out = np.zeros(shape, dtype=grad.dtype)
        out[:, :m * self.size] = grouped.reshape(b, m * self.size, channels)
        return out


class Flatten(Layer):
    kind = "Flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._take_cache())


class Dropout(Layer):
    kind = "Dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"Dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0:
            self._cache = 1.0
            return x
        if rng is None:
            raise ValueError("Dropout needs a generator in train mode")
        scale = (rng.random(x.shape) >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        self._cache = scale
        return x * scale

    def backward(self, grad):
        return grad * self._take_cache()


class Dense(Layer):
    kind = "Dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.params["weights"] = glorot_normal_init((n_in, n_out), n_in, n_out, rng, dtype)
        self.params["bias"] = np.zeros(n_out, dtype=dtype)

    def output_shape(self, in_shape):
        return in_shape[:-1] + (self.params["weights"].shape[1],)

    def forward(self, x, train=False, rng=None):
        if x.shape[-1] != self.params["weights"].shape[0]:
            raise ShapeError(
                f"Dense expects {self.params['weights'].shape[0]} features, got {x.shape[-1]}"
            )
        self._cache = x
        return dense(x, self.params["weights"], self.params["bias"])

    def backward(self, grad):
        x = self._take_cache()
        n_in, n_out = self.params["weights"].shape
        self.grads["weights"] = x.reshape(-1, n_in).T @ grad.reshape(-1, n_out)
        self.grads["bias"] = grad.reshape(-1, n_out).sum(axis=0)
        return grad @ self.params["weights"].T


class Softmax(Layer):
    kind = "Softmax"

    def forward(self, x, train=False, rng=None):
        probs = softmax(x)
        self._cache = probs
        return probs

    def backward(self, grad):
        probs = self._take_cache()
        return probs * (grad - (grad * probs).sum(axis=-1, keepdims=True))


class LSTM(Layer):
    kind = "LSTM"

    def __init__(self, n_in: int, units: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.units = units
        self.params["kernel"] = glorot_normal_init((n_in, 4 * units), n_in, 4 * units, rng, dtype)
        self.params["recurrent"] = glorot_normal_init((units, 4 * units), units, 4 * units, rng, dtype)
        bias = np.zeros(4 * units, dtype=dtype)
        bias[units:2 * units] = 1.0
        self.params["bias"] = bias

    def output_shape(self, in_shape):
        return in_shape[:-1] + (self.units,)

    def forward(self, x, train=False, rng=None):
        hs, cache = lstm_sequence(x, self.params["kernel"], self.params["recurrent"],
                                  self.params["bias"], return_cache=True)
        self._cache = cache
        return hs

    def backward(self, grad):
        cache = self._take_cache()
        n = self.units
        kernel, recurrent = self.params["kernel"], self.params["recurrent"]
        x = cache["x"]
        b, steps, _ = x.shape

        d_kernel = np.zeros_like(kernel)
        d_recurrent = np.zeros_like(recurrent)
        d_bias = np.zeros_like(self.params["bias"])
        d_x = np.empty_like(x)
        d_h_next = np.zeros((b, n), dtype=grad.dtype)
        d_c_next = np.zeros((b, n), dtype=grad.dtype)

        for t in reversed(range(steps)):
            gates = cache["gates"][t]
            i, f, g, o = gates[:, :n], gates[:, n:2 * n], gates[:, 2 * n:3 * n], gates[:, 3 * n:]
            c = cache["c"][t]
            tanh_c = np.tanh(c)
            d_h = grad[:, t] + d_h_next
            d_c = d_c_next + d_h * o * (1.0 - tanh_c ** 2)
            dz = np.concatenate([
                d_c * g * i * (1.0 - i),
                d_c * cache["c_prev"][t] * f * (1.0 - f),
                d_c * i * (1.0 - g ** 2),
                d_h * tanh_c * o * (1.0 - o),
            ], axis=1)
            d_kernel += x[:, t].T @ dz
            d_recurrent += cache["h_prev"][t].T @ dz
            d_bias += dz.sum(axis=0)
            d_x[:, t] = dz @ kernel.T
            d_h_next = dz @ recurrent.T
            d_c_next = d_c * f

        self.grads["kernel"] = d_kernel
        self.grads["recurrent"] = d_recurrent
        self.grads["bias"] = d_bias
        return d_x
