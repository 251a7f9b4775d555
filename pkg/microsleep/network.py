"""A built network: layer instances for a NetworkSpec, with forward/backward and named tensors."""

from __future__ import annotations

import numpy as np

from .architectures import CNN_LSTM, LayerSpec, NetworkSpec
from .layers import (
    LSTM, BatchNorm, Conv1D, Dense, Dropout, Flatten, GaussianNoise, Layer, MaxPool, ReLU,
    ShapeError, Softmax,
)


def _make_layer(spec: LayerSpec, in_shape: tuple, rng: np.random.Generator, dtype) -> Layer:
    kind = spec.kind
    if kind == "GaussianNoise":
        return GaussianNoise(spec.rate)
    if kind == "Conv1D":
        return Conv1D(in_shape[-1], spec.units, rng, spec.kernel, spec.padding, dtype)
    if kind == "BatchNorm":
        return BatchNorm(in_shape[-1], dtype=dtype)
    if kind == "ReLU":
        return ReLU()
    if kind == "MaxPool":
        return MaxPool(2)
    if kind == "Flatten":
        return Flatten()
    if kind == "Dropout":
        return Dropout(spec.rate)
    if kind == "Dense":
        return Dense(in_shape[-1], spec.units, rng, dtype)
    if kind == "Softmax":
        return Softmax()
    if kind == "LSTM":
        return LSTM(in_shape[-1], spec.units, rng, dtype)
    raise ShapeError(f"Unknown layer kind {kind!r}")


class Network:
    """
    Sequential stack of layers.

    CNN input is (batch, window, channels). CNN-LSTM input is
    (batch, steps, window, channels): every window runs through the encoder
    (up to Flatten), then the LSTM head sees (batch, steps, features).
    """

    def __init__(self, spec: NetworkSpec, seed: int = 0, dtype=np.float32,
                 rng: np.random.Generator | None = None):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        rng = rng if rng is not None else np.random.default_rng(seed)

        self.layers: list[Layer] = []
        shape: tuple = spec.input_shape
        for layer_spec in spec.layers:
            layer = _make_layer(layer_spec, shape, rng, self.dtype)
            shape = layer.output_shape(shape)
            if len(shape) == 2 and shape[0] < 1:
                raise ShapeError(f"{layer_spec.kind} leaves no samples for {spec.arch_id}")
            self.layers.append(layer)
        self.names = [f"{i:02d}_{layer.kind}" for i, layer in enumerate(self.layers)]
        self.encoder_end = next(i for i, layer in enumerate(self.layers) if layer.kind == "Flatten") + 1
        self._batch_shape = None

    @property
    def is_sequence(self) -> bool:
        return self.spec.family == CNN_LSTM

    # -- forward / backward -------------------------------------------------
    def forward(self, x, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if self.is_sequence:
            if x.ndim != 4:
                raise ShapeError(f"CNN-LSTM input must be (batch, steps, window, channels), got {x.shape}")
            b, t = x.shape[:2]
            self._batch_shape = (b, t)
            x = x.reshape(b * t, *x.shape[2:])
        elif x.ndim != 3:
            raise ShapeError(f"CNN input must be (batch, window, channels), got {x.shape}")
        if x.shape[1:] != self.spec.input_shape:
            raise ShapeError(f"Expected windows of shape {self.spec.input_shape}, got {x.shape[1:]}")

        for i, layer in enumerate(self.layers):
            if self.is_sequence and i == self.encoder_end:
                x = x.reshape(*self._batch_shape, -1)
            x = layer.forward(x, train, rng)
        return x

    def backward(self, grad) -> np.ndarray:
        """Propagate d loss / d output; fills every layer's grads."""
        for i in reversed(range(len(self.layers))):
            grad = self.layers[i].backward(grad)
            if self.is_sequence and i == self.encoder_end:
                grad = grad.reshape(-1, grad.shape[-1])
        return grad

    def features(self, x) -> np.ndarray:
        """Inference output of Flatten: one vector per window."""
        x = np.asarray(x, dtype=self.dtype)
        for layer in self.layers[:self.encoder_end]:
            x = layer.forward(x, False)
        return x

    def predict(self, x, batch_size: int = 1024) -> np.ndarray:
        """Inference in chunks along the batch axis."""
        x = np.asarray(x)
        if x.shape[0] == 0:
            tail = (x.shape[1], self.spec.n_classes) if self.is_sequence else (self.spec.n_classes,)
            return np.empty((0,) + tail, dtype=self.dtype)
        return np.concatenate(
            [self.forward(x[i:i + batch_size]) for i in range(0, x.shape[0], batch_size)]
        )

    # -- named tensors ------------------------------------------------------
    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays by name; the arrays are the live layer storage."""
        return {
            f"{name}/{key}": value
            for name, layer in zip(self.names, self.layers)
            for key, value in layer.params.items()
        }

    def gradients(self) -> dict[str, np.ndarray]:
        return {
            f"{name}/{key}": value
            for name, layer in zip(self.names, self.layers)
            for key, value in layer.grads.items()
        }

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state (batch-norm running statistics)."""
        return {
            f"{name}/{key}": value
            for name, layer in zip(self.names, self.layers)
            for key, value in layer.state.items()
        }

    def tensors(self) -> dict[str, np.ndarray]:
        """Every saved tensor in declaration order."""
        out = {}
        for name, layer in zip(self.names, self.layers):
            for key, value in layer.params.items():
                out[f"{name}/{key}"] = value
            for key, value in layer.state.items():
                out[f"{name}/{key}"] = value
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        expected = self.tensors()
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        if missing or extra:
            raise ShapeError(f"Tensor names differ (missing {missing[:3]}, unexpected {extra[:3]})")
        for full_name, value in tensors.items():
            if value.shape != expected[full_name].shape:
                raise ShapeError(
                    f"{full_name}: expected shape {expected[full_name].shape}, got {value.shape}"
                )
        for name, layer in zip(self.names, self.layers):
            for store in (layer.params, layer.state):
                for key in store:
                    store[key] = np.array(tensors[f"{name}/{key}"], dtype=self.dtype)

    def astype(self, dtype) -> "Network":
        self.dtype = np.dtype(dtype)
        for layer in self.layers:
            layer.astype(self.dtype)
        return self

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))
