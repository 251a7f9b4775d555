"""
Dense per-sample prediction over whole recordings, and post-processing.

Two CNN engines produce the same track. The naive one evaluates the network
on the window centered on every sample. The fast one runs each convolution
once over the whole padded signal and splits the stream into phase branches
at every pooling layer, so that after P pools branch b at offset q holds the
features of the window centered on sample q * 2**P + b.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .architectures import CNN_LSTM, NetworkSpec
from .conditioning import normalize_cnn, normalize_lstm
from .config import BINARY_CLASS_NAMES, CLASS_NAMES, COARSEN_SAMPLES, MSE_MAX_SECONDS, MSE_MIN_SECONDS
from .dataset import pad_for_windows
from .ingest import ChannelError, Label, Recording, label_runs, select_channels
from .layers import batch_norm, conv1d, relu
from .network import Network

logger = logging.getLogger("microsleep")

NAIVE_BATCH = 256
FAST_CHUNK = 65536
LONG_EPISODE_FLAG = "sleep>15s"

# coarsening tie-break, highest priority first
_TIE_PRIORITY = (Label.MSE, Label.MSEc, Label.ED, Label.W)


class PredictionError(ValueError):
    """Recording cannot be segmented by this network."""


@dataclass
class PredictionTrack:
    """
    probs: (samples, classes) softmax rows; labels: per-sample class codes.

    For CNN-LSTM tracks the classes are non-MSE (0) and MSE (1), which share
    codes with W and MSE. `coarse_samples` is set once labels are coarsened.
    """
    probs: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    resolution_samples: int = 1
    class_names: tuple[str, ...] = CLASS_NAMES
    arch_id: str = ""
    coarse_samples: int = 0

    def __len__(self) -> int:
        return self.labels.shape[0]

    @classmethod
    def from_probs(cls, probs: np.ndarray, **kwargs) -> "PredictionTrack":
        # argmax keeps the lower code on ties
        return cls(probs=probs, labels=np.argmax(probs, axis=1).astype(np.int8), **kwargs)


@dataclass(frozen=True)
class Episode:
    start_sample: int
    end_sample: int
    label: int
    flag: str = ""

    @property
    def length(self) -> int:
        return self.end_sample - self.start_sample


# ---------------------------------------------------------------------------
# Input
# ---------------------------------------------------------------------------
def prepare_input(rec: Recording, spec: NetworkSpec, dtype=np.float32) -> np.ndarray:
    """The network's channels from a conditioned recording, normalized for its family."""
    try:
        selected = select_channels(rec, spec.channel_names)
    except ChannelError as e:
        raise PredictionError(f"{spec.arch_id} cannot read {rec.id}: {e}") from None
    normalize = normalize_lstm if spec.family == CNN_LSTM else normalize_cnn
    return normalize(selected.data).astype(dtype)


def _check_cnn(network: Network) -> None:
    if network.is_sequence:
        raise PredictionError("Dense sliding-window prediction needs a CNN architecture")


# ---------------------------------------------------------------------------
# CNN engines
# ---------------------------------------------------------------------------
def predict_dense_naive(network: Network, rec: Recording, batch_size: int = NAIVE_BATCH) -> PredictionTrack:
    """Evaluate the network on the edge-replicated window centered on every sample."""
    _check_cnn(network)
    spec = network.spec
    x = prepare_input(rec, spec, network.dtype)
    n = x.shape[0]
    if n == 0:
        raise PredictionError(f"Recording {rec.id} is empty")
    padded = pad_for_windows(x, spec.window_samples)
    windows = sliding_window_view(padded, spec.window_samples, axis=0)  # (n, C, W)

    probs = np.empty((n, spec.n_classes), dtype=network.dtype)
    for start in range(0, n, batch_size):
        batch = np.ascontiguousarray(windows[start:start + batch_size].transpose(0, 2, 1))
        probs[start:start + batch.shape[0]] = network.forward(batch)
    return PredictionTrack.from_probs(probs, arch_id=spec.arch_id)


def _pool_phases(y: np.ndarray) -> np.ndarray:
    """
    Split every branch into its even and odd pooling phases.

    Output branch b + p * nb holds phase p of input branch b. The odd phase
    repeats the last element once so both phases keep the same length; the
    extra value only reaches positions no window uses.
    """
    nb, length, channels = y.shape
    m = length // 2
    if m < 1:
        raise PredictionError("Signal too short for the pooling ladder")
    even = y[:, :2 * m].reshape(nb, m, 2, channels).max(axis=2)
    extended = np.concatenate([y, y[:, -1:]], axis=1)
    odd = extended[:, 1:1 + 2 * m].reshape(nb, m, 2, channels).max(axis=2)
    return np.concatenate([even, odd], axis=0)


def _fast_chunk(network: Network, segment: np.ndarray, count: int) -> np.ndarray:
    """Probabilities for the `count` windows that start at segment[0], segment[1], ..."""
    branches = segment[None]
    head_start = None
    for i, layer in enumerate(network.layers):
        kind = layer.kind
        if kind == "Flatten":
            head_start = i + 1
            break
        if kind in ("GaussianNoise", "Dropout"):
            continue
        if kind == "Conv1D":
            kernel, bias = layer.params["kernel"], layer.params["bias"]
            if layer.padding == "same":
                # at temporal size 1 only the center tap sees data
                branches = branches @ kernel[kernel.shape[0] // 2] + bias
            else:
                branches = conv1d(branches, kernel, bias)
        elif kind == "BatchNorm":
            branches, _, _ = batch_norm(
                branches, layer.params["gamma"], layer.params["beta"],
                layer.state["running_mean"], layer.state["running_var"], False, layer.eps,
            )
        elif kind == "ReLU":
            branches = relu(branches)
        elif kind == "MaxPool":
            branches = _pool_phases(branches)
        else:
            raise PredictionError(f"No shared-computation rule for {kind}")

    n_branches = branches.shape[0]
    s = np.arange(count)
    features = branches[s % n_branches, s // n_branches]

    for layer in network.layers[head_start:]:
        features = layer.forward(features, False)
    return features


def predict_dense_fast(network: Network, rec: Recording, chunk: int = FAST_CHUNK) -> PredictionTrack:
    """Same output as predict_dense_naive, sharing convolution work between overlapping windows."""
    _check_cnn(network)
    spec = network.spec
    x = prepare_input(rec, spec, network.dtype)
    n = x.shape[0]
    if n == 0:
        raise PredictionError(f"Recording {rec.id} is empty")
    padded = pad_for_windows(x, spec.window_samples)
    width = spec.window_samples

    probs = np.empty((n, spec.n_classes), dtype=network.dtype)
    for start in range(0, n, chunk):
        count = min(chunk, n - start)
        segment = padded[start:start + count + width - 1]
        probs[start:start + count] = _fast_chunk(network, segment, count)
    return PredictionTrack.from_probs(probs, arch_id=spec.arch_id)


# ---------------------------------------------------------------------------
# CNN-LSTM
# ---------------------------------------------------------------------------
def lstm_window_count(n_samples: int, spec: NetworkSpec) -> int:
    if n_samples < spec.window_samples:
        return 0
    return (n_samples - spec.window_samples) // spec.stride_samples + 1


def predict_cnn_lstm(network: Network, rec: Recording, batch_size: int = 1024) -> PredictionTrack:
    """
    Encode windows at the stride, run the LSTM over the whole sequence and
    spread each window's decision over the stride-long span centered on it.
    """
    spec = network.spec
    if not network.is_sequence:
        raise PredictionError(f"{spec.arch_id} is not a CNN-LSTM architecture")
    x = prepare_input(rec, spec, network.dtype)
    n = x.shape[0]
    n_windows = lstm_window_count(n, spec)
    if n_windows == 0:
        raise PredictionError(
            f"Recording {rec.id} has {n} samples; the CNN-LSTM needs at least {spec.window_samples}"
        )

    windows = sliding_window_view(x, spec.window_samples, axis=0)[::spec.stride_samples][:n_windows]
    windows = windows.transpose(0, 2, 1)
    features = np.concatenate([
        network.features(np.ascontiguousarray(windows[i:i + batch_size]))
        for i in range(0, n_windows, batch_size)
    ])
    out = features[None]
    for layer in network.layers[network.encoder_end:]:
        out = layer.forward(out, False)
    window_probs = out[0]

    stride = spec.stride_samples
    first_span = spec.window_samples // 2 - stride // 2
    owner = np.clip((np.arange(n) - first_span) // stride, 0, n_windows - 1)
    logger.debug(f"  {rec.id}: {n_windows} decision points")
    return PredictionTrack.from_probs(
        window_probs[owner],
        resolution_samples=stride,
        class_names=BINARY_CLASS_NAMES,
        arch_id=spec.arch_id,
    )


def predict(network: Network, rec: Recording, naive: bool = False) -> PredictionTrack:
    if network.is_sequence:
        return predict_cnn_lstm(network, rec)
    if naive:
        return predict_dense_naive(network, rec)
    return predict_dense_fast(network, rec)


# ---------------------------------------------------------------------------
# Post-processing
# ---------------------------------------------------------------------------
def coarsen_labels(labels: np.ndarray, interval_samples: int = COARSEN_SAMPLES,
                   n_classes: int = len(Label)) -> np.ndarray:
    """Most frequent code per interval; ties go to MSE, then MSEc, ED, W."""
    if interval_samples < 1:
        raise ValueError(f"Interval must be at least 1 sample, got {interval_samples}")
    labels = np.asarray(labels)
    if labels.size == 0:
        return labels.copy()
    interval = np.arange(labels.size) // interval_samples
    n_int = int(interval[-1]) + 1
    counts = np.bincount(interval * n_classes + labels.astype(np.intp),
                         minlength=n_int * n_classes).reshape(n_int, n_classes)
    priority = np.array([int(k) for k in _TIE_PRIORITY if k < n_classes])
    winners = priority[np.argmax(counts[:, priority], axis=1)]
    return winners[interval].astype(labels.dtype)


def coarsen_majority(track: PredictionTrack, interval_samples: int = COARSEN_SAMPLES) -> PredictionTrack:
    """Copy of the track with majority labels per interval; probabilities are left as is."""
    return PredictionTrack(
        probs=track.probs,
        labels=coarsen_labels(track.labels, interval_samples, len(track.class_names)),
        resolution_samples=track.resolution_samples,
        class_names=track.class_names,
        arch_id=track.arch_id,
        coarse_samples=interval_samples,
    )


def apply_duration_criteria(labels: np.ndarray, rate_hz: float = 200.0,
                            min_s: float = MSE_MIN_SECONDS, max_s: float = MSE_MAX_SECONDS) -> np.ndarray:
    """
    MSE runs shorter than min_s become W. Runs longer than max_s stay; they
    are flagged when turned into episodes.
    """
    if not 0 <= min_s <= max_s:
        raise ValueError(f"Need 0 <= min_s <= max_s, got {min_s}, {max_s}")
    out = np.array(labels, copy=True)
    min_samples = int(round(min_s * rate_hz))
    for start, end, code in label_runs(out):
        if code == Label.MSE and end - start < min_samples:
            out[start:end] = Label.W
    return out


def episodes_from_labels(labels: np.ndarray, rate_hz: float = 200.0,
                         max_s: float = MSE_MAX_SECONDS) -> list[Episode]:
    """Maximal runs of equal labels; MSE runs over max_s carry the long-episode flag."""
    max_samples = int(round(max_s * rate_hz))
    episodes = []
    for start, end, code in label_runs(labels):
        flag = LONG_EPISODE_FLAG if code == Label.MSE and end - start > max_samples else ""
        episodes.append(Episode(start, end, code, flag))
    return episodes


def labels_from_episodes(episodes: list[Episode]) -> np.ndarray:
    if not episodes:
        return np.empty(0, dtype=np.int8)
    return np.concatenate([np.full(e.length, e.label, dtype=np.int8) for e in episodes])
