"""Builders for the CNN window-size family, the single-channel variant and the CNN-LSTM."""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import ARCHITECTURE_IDS, EOG_CHANNELS, EVAL_EEG_CHANNEL, SAMPLE_RATE_HZ

CNN = "CNN"
CNN_LSTM = "CNN_LSTM"

BASE_FILTERS = (8, 16, 32, 64)
REPEAT_FILTERS = 128
NOISE_STD = 0.0005
DROPOUT_RATE = 0.5
DENSE_UNITS = 64
EMBEDDING_FILTERS = 64

LSTM_WINDOW_SECONDS = 1
LSTM_STRIDE_SAMPLES = 50
LSTM_REPEATS = 2
LSTM_UNITS = 128
LSTM_SEQ_LEN = 200

_REPEATS = {2: 3, 4: 4, 8: 5, 16: 6, 32: 7}


class ArchitectureError(ValueError):
    """Unsupported architecture request."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int = 0          # filters, dense size or LSTM hidden size
    rate: float = 0.0       # dropout rate or noise std
    kernel: int = 3
    padding: str = "valid"


@dataclass(frozen=True)
class NetworkSpec:
    arch_id: str
    family: str
    window_samples: int
    n_channels: int
    channel_names: tuple[str, ...]
    n_classes: int
    layers: tuple[LayerSpec, ...] = field(repr=False)
    weighting: str = "inverse"
    stride_samples: int = 0
    seq_len: int = 0
    embedding: bool = False

    @property
    def input_shape(self) -> tuple[int, int]:
        return self.window_samples, self.n_channels


def repeat_count(window_seconds: int) -> int:
    try:
        return _REPEATS[int(window_seconds)]
    except (KeyError, ValueError, TypeError):
        raise ArchitectureError(
            f"Unsupported window {window_seconds!r} s (expected one of {sorted(_REPEATS)})"
        ) from None


def temporal_sizes(window_samples: int, n_blocks: int) -> list[int]:
    """Length after each conv+pool block: n -> (n - 2) // 2."""
    sizes = [window_samples]
    for _ in range(n_blocks):
        sizes.append((sizes[-1] - 2) // 2)
    return sizes


def _conv_blocks(filters: tuple[int, ...]) -> list[LayerSpec]:
    layers = []
    for n in filters:
        layers += [LayerSpec("Conv1D", n), LayerSpec("BatchNorm"), LayerSpec("ReLU"), LayerSpec("MaxPool")]
    return layers


def _check_ladder(window_samples: int, n_blocks: int) -> None:
    sizes = temporal_sizes(window_samples, n_blocks)
    if sizes[-1] != 1:
        raise ArchitectureError(
            f"Temporal size ladder {sizes} does not end at 1 for {window_samples} samples"
        )


def channel_names(n_channels: int) -> tuple[str, ...]:
    if n_channels == 3:
        return (EVAL_EEG_CHANNEL,) + EOG_CHANNELS
    if n_channels == 1:
        return (EVAL_EEG_CHANNEL,)
    raise ArchitectureError(f"n_channels must be 1 or 3, got {n_channels}")


def build_cnn(window_seconds: int, n_channels: int = 3, embedding: bool = False,
              arch_id: str | None = None, weighting: str = "inverse") -> NetworkSpec:
    """
    GaussianNoise, then 4 base blocks (8, 16, 32, 64 filters) and
    repeat_count(window) 128-filter blocks, then Flatten, Dropout, Dense(64),
    ReLU, Dense(4), Softmax.

    With `embedding`, a 64-filter conv block at temporal size 1 sits before
    Flatten so the flattened vector is the 64-d embedding.
    """
    repeats = repeat_count(window_seconds)
    window_samples = int(window_seconds * SAMPLE_RATE_HZ)
    filters = BASE_FILTERS + (REPEAT_FILTERS,) * repeats
    _check_ladder(window_samples, len(filters))

    layers = [LayerSpec("GaussianNoise", rate=NOISE_STD)] + _conv_blocks(filters)
    if embedding:
        layers += [
            LayerSpec("Conv1D", EMBEDDING_FILTERS, padding="same"),
            LayerSpec("BatchNorm"),
            LayerSpec("ReLU"),
        ]
    layers += [
        LayerSpec("Flatten"),
        LayerSpec("Dropout", rate=DROPOUT_RATE),
        LayerSpec("Dense", DENSE_UNITS),
        LayerSpec("ReLU"),
        LayerSpec("Dense", 4),
        LayerSpec("Softmax"),
    ]
    return NetworkSpec(
        arch_id=arch_id or f"{window_seconds}s",
        family=CNN,
        window_samples=window_samples,
        n_channels=n_channels,
        channel_names=channel_names(n_channels),
        n_classes=4,
        layers=tuple(layers),
        weighting=weighting,
        embedding=embedding,
    )


def build_cnn_lstm(n_channels: int = 3) -> NetworkSpec:
    """
    Per-window encoder on 1-s windows (6 blocks down to size 1), an LSTM over
    windows advancing by 50 samples, and a per-step Dense(2) + Softmax.
    """
    window_samples = int(LSTM_WINDOW_SECONDS * SAMPLE_RATE_HZ)
    filters = BASE_FILTERS + (REPEAT_FILTERS,) * LSTM_REPEATS
    _check_ladder(window_samples, len(filters))
    layers = [LayerSpec("GaussianNoise", rate=NOISE_STD)] + _conv_blocks(filters) + [
        LayerSpec("Flatten"),
        LayerSpec("LSTM", LSTM_UNITS),
        LayerSpec("Dense", 2),
        LayerSpec("Softmax"),
    ]
    return NetworkSpec(
        arch_id="cnn_lstm",
        family=CNN_LSTM,
        window_samples=window_samples,
        n_channels=n_channels,
        channel_names=channel_names(n_channels),
        n_classes=2,
        layers=tuple(layers),
        stride_samples=LSTM_STRIDE_SAMPLES,
        seq_len=LSTM_SEQ_LEN,
    )


def build_architecture(arch_id: str, embedding: bool = False) -> NetworkSpec:
    """Map a CLI architecture id to its NetworkSpec."""
    if arch_id not in ARCHITECTURE_IDS:
        raise ArchitectureError(
            f"Unknown architecture {arch_id!r} (expected one of {', '.join(ARCHITECTURE_IDS)})"
        )
    if arch_id == "cnn_lstm":
        if embedding:
            raise ArchitectureError("The embedding block exists only for CNN architectures")
        return build_cnn_lstm()
    if arch_id == "16s_u":
        return build_cnn(16, 3, embedding, arch_id, weighting="uniform")
    if arch_id == "16s_1c":
        return build_cnn(16, 1, embedding, arch_id)
    return build_cnn(int(arch_id[:-1]), 3, embedding, arch_id)


def pool_count(spec: NetworkSpec) -> int:
    return sum(1 for layer in spec.layers if layer.kind == "MaxPool")
