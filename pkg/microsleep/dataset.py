"""Patient-level splitting, window extraction, class weighting and batch sampling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import EEG_CHANNELS, EOG_CHANNELS, EVAL_EEG_CHANNEL
from .ingest import Label, LabelTrack, Recording

logger = logging.getLogger("microsleep")

DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)


class SplitError(ValueError):
    """Invalid split request."""


class WeightingError(ValueError):
    """Class weights cannot be computed."""


class SamplingError(ValueError):
    """A batch cannot be drawn without repeating a window."""


@dataclass(frozen=True)
class SplitPlan:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train_ids), len(self.val_ids), len(self.test_ids)


@dataclass(frozen=True)
class ClassWeights:
    weights: np.ndarray
    scheme: str = "inverse"

    def __getitem__(self, label: int) -> float:
        return float(self.weights[int(label)])

    def lookup(self, labels: np.ndarray) -> np.ndarray:
        return self.weights[np.asarray(labels, dtype=np.intp)]


@dataclass
class WindowBatch:
    """
    inputs: (B, window, channels) for CNNs, (B, T, window, channels) for CNN-LSTM.
    sources: (B, 3) rows of (recording index, center or first window, EEG column).
    """
    inputs: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    sources: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_by_patient(ids: Sequence[str], fractions=DEFAULT_FRACTIONS, seed: int = 0) -> SplitPlan:
    """
    Shuffle recording ids under a seed and cut them into train/val/test.

    Train and test receive round(fraction * N) ids; validation takes the rest.
    """
    ids = list(ids)
    if not ids:
        raise SplitError("Cannot split an empty id list")
    if len(set(ids)) != len(ids):
        raise SplitError("Recording ids must be unique")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError(f"Fractions must be three non-negative numbers summing to 1, got {fractions}")

    n = len(ids)
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(n)]

    n_train = _round_half_up(fractions[0] * n)
    n_test = _round_half_up(fractions[2] * n)
    n_val = n - n_train - n_test
    if n_val < 0:
        n_train += n_val
        n_val = 0

    return SplitPlan(
        train_ids=tuple(shuffled[:n_train]),
        val_ids=tuple(shuffled[n_train:n_train + n_val]),
        test_ids=tuple(shuffled[n_train + n_val:]),
        fractions=fractions,
    )


def stage_fractions(tracks: Sequence[LabelTrack], n_classes: int = len(Label)) -> np.ndarray:
    """Fraction of samples spent in each class over all tracks."""
    counts = np.zeros(n_classes, dtype=np.int64)
    for track in tracks:
        counts += np.bincount(track.labels, minlength=n_classes)[:n_classes]
    total = counts.sum()
    return counts / total if total else counts.astype(np.float64)


def class_weights(labels, scheme: str = "inverse", n_classes: int = len(Label)) -> ClassWeights:
    """
    Per-class loss weights.

    inverse: w(k) proportional to 1/frequency(k), scaled so the mean weight is 1.
    uniform: every weight is 1.
    """
    if scheme == "uniform":
        return ClassWeights(np.ones(n_classes), scheme)
    if scheme != "inverse":
        raise WeightingError(f"Unknown weighting scheme {scheme!r} (expected inverse or uniform)")

    labels = labels.labels if isinstance(labels, LabelTrack) else np.asarray(labels)
    counts = np.bincount(labels.astype(np.intp), minlength=n_classes)[:n_classes]
    if np.any(counts == 0):
        absent = [str(k) for k in np.flatnonzero(counts == 0)]
        raise WeightingError(f"Class code(s) {', '.join(absent)} absent; inverse weighting undefined")
    inverse = counts.sum() / counts.astype(np.float64)
    return ClassWeights(inverse / inverse.mean(), scheme)


def pad_for_windows(data: np.ndarray, window_samples: int) -> np.ndarray:
    """Edge-replicate so that padded[c:c + window] is the window centered on c."""
    before = window_samples // 2
    after = window_samples - before - 1
    return np.pad(data, ((before, after), (0, 0)), mode="edge")


def window_at(rec: Recording, center: int, window_samples: int, replicate: bool = True) -> np.ndarray:
    """
    The (window, channels) slice [center - window//2, center + ceil(window/2)).

    Samples outside the recording repeat the first or last sample.
    """
    n = rec.duration_samples
    if not 0 <= center < n:
        raise IndexError(f"Center {center} outside recording of {n} samples")
    start = center - window_samples // 2
    idx = np.arange(start, start + window_samples)
    if not replicate and (idx[0] < 0 or idx[-1] >= n):
        raise SamplingError(
            f"Window of {window_samples} at center {center} leaves the recording "
            f"({n} samples) and replication is disabled"
        )
    return rec.data[np.clip(idx, 0, n - 1)]


class BatchSampler:
    """
    Draws training windows without repetition inside a training iteration.

    In 3-channel mode each element's EEG column is O1M2 or O2M1 with equal
    probability, stacked with E1M1 and E2M1. In 1-channel mode the requested
    EEG derivation is used as is.
    """

    def __init__(
        self,
        recordings: Sequence[Recording],
        tracks: Sequence[LabelTrack],
        window_samples: int,
        n_channels: int,
        weights: ClassWeights,
        normalize: Callable[[np.ndarray], np.ndarray],
        rng: np.random.Generator,
        eeg_channel: str = EVAL_EEG_CHANNEL,
        dtype=np.float32,
    ):
        if not recordings:
            raise SamplingError("No training recordings")
        if n_channels not in (1, 3):
            raise SamplingError(f"n_channels must be 1 or 3, got {n_channels}")
        self.window_samples = window_samples
        self.n_channels = n_channels
        self.weights = weights
        self.rng = rng
        self.iteration = 0

        names = EEG_CHANNELS + EOG_CHANNELS if n_channels == 3 else (eeg_channel,)
        self._padded = []
        self._labels = []
        for rec, track in zip(recordings, tracks):
            if track.length != rec.duration_samples:
                raise SamplingError(f"Label track of {rec.id} does not match its length")
            columns = np.column_stack([normalize(rec.channel(name)) for name in names])
            self._padded.append(pad_for_windows(columns.astype(dtype), window_samples))
            self._labels.append(np.asarray(track.labels))
        lengths = np.array([rec.duration_samples for rec in recordings], dtype=np.int64)
        self._offsets = np.concatenate([[0], np.cumsum(lengths)])
        self.total = int(self._offsets[-1])
        self._order = None
        self._cursor = 0

    def batches_per_iteration(self, batch_size: int) -> int:
        return -(-self.total // batch_size)

    def start_iteration(self) -> None:
        self.iteration += 1
        self._order = self.rng.permutation(self.total)
        self._cursor = 0

    @property
    def remaining(self) -> int:
        return 0 if self._order is None else self.total - self._cursor

    def sample_batch(self, batch_size: int) -> WindowBatch:
        """Next batch of distinct (recording, center) draws; the last one may be short."""
        if batch_size < 1:
            raise SamplingError(f"batch_size must be positive, got {batch_size}")
        if batch_size > self.total:
            raise SamplingError(
                f"Requested {batch_size} windows but only {self.total} distinct centers exist"
            )
        if self._order is None:
            self.start_iteration()
        if self.remaining == 0:
            raise SamplingError("Training iteration exhausted; call start_iteration()")

        flat = self._order[self._cursor:self._cursor + batch_size]
        self._cursor += flat.size
        rec_idx = np.searchsorted(self._offsets, flat, side="right") - 1
        centers = flat - self._offsets[rec_idx]

        if self.n_channels == 3:
            eeg = self.rng.integers(0, 2, size=flat.size)
        else:
            eeg = np.zeros(flat.size, dtype=np.int64)

        offsets = np.arange(self.window_samples)
        inputs = np.empty((flat.size, self.window_samples, self.n_channels),
                          dtype=self._padded[0].dtype)
        targets = np.empty(flat.size, dtype=np.int64)
        for r in np.unique(rec_idx):
            sel = np.flatnonzero(rec_idx == r)
            windows = self._padded[r][centers[sel, None] + offsets]
            if self.n_channels == 3:
                columns = np.stack([eeg[sel], np.full(sel.size, 2), np.full(sel.size, 3)], axis=1)
                windows = np.take_along_axis(windows, columns[:, None, :], axis=2)
            inputs[sel] = windows
            targets[sel] = self._labels[r][centers[sel]]

        return WindowBatch(
            inputs=inputs,
            targets=targets,
            weights=self.weights.lookup(targets).astype(inputs.dtype),
            sources=np.stack([rec_idx, centers, eeg], axis=1),
        )


class SequenceSampler:
    """
    Draws non-overlapping sequences of encoder windows for the CNN-LSTM.

    Windows are `window_samples` long and advance by `stride_samples`; a
    sequence holds `seq_len` consecutive windows. Targets are the binary
    MSE/non-MSE label at each window center.
    """

    def __init__(
        self,
        recordings: Sequence[Recording],
        tracks: Sequence[LabelTrack],
        window_samples: int,
        stride_samples: int,
        seq_len: int,
        n_channels: int,
        weights: ClassWeights,
        normalize: Callable[[np.ndarray], np.ndarray],
        rng: np.random.Generator,
        eeg_channel: str = EVAL_EEG_CHANNEL,
        dtype=np.float32,
    ):
        if not recordings:
            raise SamplingError("No training recordings")
        self.window_samples = window_samples
        self.stride_samples = stride_samples
        self.seq_len = seq_len
        self.n_channels = n_channels
        self.weights = weights
        self.rng = rng
        self.iteration = 0

        names = EEG_CHANNELS + EOG_CHANNELS if n_channels == 3 else (eeg_channel,)
        span = (seq_len - 1) * stride_samples + window_samples
        self._signals = []
        self._targets = []
        slots = []
        for r, (rec, track) in enumerate(zip(recordings, tracks)):
            n_seq = (rec.duration_samples - span) // (seq_len * stride_samples) + 1 \
                if rec.duration_samples >= span else 0
            if n_seq == 0:
                logger.warning(f"  {rec.id} is shorter than one training sequence; skipped")
            columns = np.column_stack([normalize(rec.channel(name)) for name in names])
            self._signals.append(columns.astype(dtype))
            self._targets.append(binary_mse_labels(track.labels))
            slots.extend((r, k) for k in range(n_seq))
        if not slots:
            raise SamplingError("No recording is long enough for one training sequence")
        self._slots = np.array(slots, dtype=np.int64)
        self.total = len(slots)
        self._order = None
        self._cursor = 0

    def batches_per_iteration(self, batch_size: int) -> int:
        return -(-self.total // batch_size)

    def start_iteration(self) -> None:
        self.iteration += 1
        self._order = self.rng.permutation(self.total)
        self._cursor = 0

    @property
    def remaining(self) -> int:
        return 0 if self._order is None else self.total - self._cursor

    def sample_batch(self, batch_size: int) -> WindowBatch:
        if batch_size < 1:
            raise SamplingError(f"batch_size must be positive, got {batch_size}")
        if self._order is None:
            self.start_iteration()
        if self.remaining == 0:
            raise SamplingError("Training iteration exhausted; call start_iteration()")

        picks = self._slots[self._order[self._cursor:self._cursor + batch_size]]
        self._cursor += picks.shape[0]
        eeg = self.rng.integers(0, 2, size=picks.shape[0]) if self.n_channels == 3 \
            else np.zeros(picks.shape[0], dtype=np.int64)

        window_starts = np.arange(self.seq_len) * self.stride_samples
        offsets = np.arange(self.window_samples)
        b = picks.shape[0]
        inputs = np.empty((b, self.seq_len, self.window_samples, self.n_channels),
                          dtype=self._signals[0].dtype)
        targets = np.empty((b, self.seq_len), dtype=np.int64)
        first_windows = np.empty(b, dtype=np.int64)
        for i, (r, k) in enumerate(picks):
            first = k * self.seq_len * self.stride_samples
            first_windows[i] = k * self.seq_len
            index = first + window_starts[:, None] + offsets
            signal = self._signals[r]
            if self.n_channels == 3:
                signal = signal[:, [eeg[i], 2, 3]]
            inputs[i] = signal[index]
            targets[i] = self._targets[r][first + window_starts + self.window_samples // 2]

        return WindowBatch(
            inputs=inputs,
            targets=targets,
            weights=self.weights.lookup(targets).astype(inputs.dtype),
            sources=np.stack([picks[:, 0], first_windows, eeg], axis=1),
        )


def binary_mse_labels(labels: np.ndarray) -> np.ndarray:
    """MSE -> 1, everything else -> 0."""
    return (np.asarray(labels) == Label.MSE).astype(np.int8)
