"""Parse EDF recordings and expert scoring files into Recording and LabelTrack values."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .config import CLASS_NAMES

logger = logging.getLogger("microsleep")

EDF_BASE_HEADER_BYTES = 256
EDF_SIGNAL_HEADER_BYTES = 256
EDF_DIGITAL_MIN = -32768
EDF_DIGITAL_MAX = 32767

# (name, width) of the per-signal header fields, in file order
_SIGNAL_FIELDS = (
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefilter", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
)


class EdfError(ValueError):
    """Malformed or unsupported EDF content."""


class ChannelError(ValueError):
    """A requested channel does not exist in the recording."""


class LabelFileError(ValueError):
    """Malformed scoring file."""


class Label(IntEnum):
    W = 0
    MSE = 1
    MSEc = 2
    ED = 3

    @classmethod
    def from_name(cls, name: str) -> "Label":
        try:
            return cls[name]
        except KeyError:
            raise LabelFileError(
                f"Unknown class {name!r} (expected one of {', '.join(CLASS_NAMES)})"
            ) from None


@dataclass(frozen=True)
class Recording:
    """Multi-channel signal in µV, stored as a (samples, channels) array."""
    id: str
    rate_hz: float
    channel_names: tuple[str, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"Recording data must be 2-D, got shape {data.shape}")
        if data.shape[1] != len(self.channel_names):
            raise ValueError(
                f"{len(self.channel_names)} channel names for {data.shape[1]} data columns"
            )
        if len(set(self.channel_names)) != len(self.channel_names):
            raise ValueError(f"Duplicate channel names: {self.channel_names}")
        if not self.rate_hz > 0:
            raise ValueError(f"Sampling rate must be positive, got {self.rate_hz}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))

    @property
    def duration_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> list[tuple[str, np.ndarray]]:
        return [(name, self.data[:, i]) for i, name in enumerate(self.channel_names)]

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.channel_names.index(name)]
        except ValueError:
            raise ChannelError(f"Channel {name!r} not in recording {self.id}") from None

    def with_data(self, data: np.ndarray) -> "Recording":
        return Recording(self.id, self.rate_hz, self.channel_names, data)


@dataclass(frozen=True)
class LabelTrack:
    """Per-sample class codes aligned to a Recording."""
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        if labels.ndim != 1:
            raise ValueError(f"Label track must be 1-D, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= len(Label)):
            raise ValueError("Label track contains codes outside W/MSE/MSEc/ED")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def length(self) -> int:
        return self.labels.shape[0]

    def __len__(self) -> int:
        return self.length


# ---------------------------------------------------------------------------
# EDF
# ---------------------------------------------------------------------------
def _ascii_field(raw: bytes, name: str) -> str:
    try:
        return raw.decode("ascii").strip()
    except UnicodeDecodeError:
        raise EdfError(f"Header field {name!r} is not ASCII") from None


def _number_field(raw: bytes, name: str, kind=float):
    text = _ascii_field(raw, name)
    try:
        return kind(text)
    except ValueError:
        raise EdfError(f"Header field {name!r} is not a number: {text!r}") from None


def parse_edf(blob: bytes, recording_id: str = "") -> Recording:
    """
    Decode an EDF file held in memory.

    Digital samples (16-bit little-endian two's complement) are mapped to
    physical units through each signal's digital/physical min/max. All signals
    must share one sampling rate.
    """
    if len(blob) < EDF_BASE_HEADER_BYTES:
        raise EdfError(f"File too short for an EDF header ({len(blob)} bytes)")

    version = _ascii_field(blob[0:8], "version")
    if version != "0":
        raise EdfError(f"Unsupported EDF version field {version!r}")
    header_bytes = _number_field(blob[184:192], "header_bytes", int)
    n_records = _number_field(blob[236:244], "n_records", int)
    record_seconds = _number_field(blob[244:252], "record_duration", float)
    n_signals = _number_field(blob[252:256], "n_signals", int)

    if n_signals < 1:
        raise EdfError(f"EDF declares {n_signals} signals")
    expected_header = EDF_BASE_HEADER_BYTES + EDF_SIGNAL_HEADER_BYTES * n_signals
    if header_bytes != expected_header:
        raise EdfError(
            f"Header byte count {header_bytes} != 256*(signals+1) = {expected_header}"
        )
    if len(blob) < expected_header:
        raise EdfError("File ends inside the signal headers")
    if record_seconds <= 0:
        raise EdfError(f"Record duration must be positive, got {record_seconds}")

    fields: dict[str, list[bytes]] = {}
    offset = EDF_BASE_HEADER_BYTES
    for name, width in _SIGNAL_FIELDS:
        fields[name] = [
            blob[offset + i * width: offset + (i + 1) * width] for i in range(n_signals)
        ]
        offset += width * n_signals

    labels = [_ascii_field(raw, "label") for raw in fields["label"]]
    phys_min = np.array([_number_field(r, "physical_min") for r in fields["physical_min"]])
    phys_max = np.array([_number_field(r, "physical_max") for r in fields["physical_max"]])
    dig_min = np.array([_number_field(r, "digital_min") for r in fields["digital_min"]])
    dig_max = np.array([_number_field(r, "digital_max") for r in fields["digital_max"]])
    spr = np.array(
        [_number_field(r, "samples_per_record", int) for r in fields["samples_per_record"]]
    )

    if np.any(spr < 1):
        raise EdfError("Every signal needs at least one sample per record")
    if np.any(spr != spr[0]):
        rates = ", ".join(f"{lbl}={n / record_seconds:g} Hz" for lbl, n in zip(labels, spr))
        raise EdfError(f"Signals have differing sampling rates ({rates})")
    if np.any(dig_max <= dig_min):
        raise EdfError("Digital maximum must exceed digital minimum for every signal")

    record_bytes = 2 * int(spr.sum())
    payload = blob[expected_header:]
    if n_records == -1:
        n_records = len(payload) // record_bytes
    if n_records < 0:
        raise EdfError(f"Invalid record count {n_records}")
    if len(payload) < n_records * record_bytes:
        raise EdfError(
            f"Truncated data: {n_records} records need {n_records * record_bytes} bytes, "
            f"found {len(payload)}"
        )

    digital = np.frombuffer(payload, dtype="<i2", count=n_records * int(spr.sum()))
    per_record = spr[0]
    # records x signals x samples -> samples x signals
    digital = digital.reshape(n_records, n_signals, per_record).transpose(0, 2, 1)
    digital = digital.reshape(n_records * per_record, n_signals).astype(np.float64)

    scale = (phys_max - phys_min) / (dig_max - dig_min)
    physical = (digital - dig_min) * scale + phys_min

    rate_hz = per_record / record_seconds
    logger.debug(
        f"Parsed EDF {recording_id or '<memory>'}: {n_signals} signals, "
        f"{n_records} records, {rate_hz:g} Hz"
    )
    return Recording(recording_id, rate_hz, tuple(labels), physical)


def _pad_field(value, width: int) -> bytes:
    text = value if isinstance(value, str) else f"{value:g}" if isinstance(value, float) else str(value)
    if len(text) > width:
        text = text[:width]
    return text.ljust(width).encode("ascii")


def _edf_number(value: float, rounding) -> str:
    """Fit a physical limit into an 8-character field, rounding outward."""
    for decimals in (3, 2, 1, 0):
        factor = 10.0 ** decimals
        rounded = rounding(value * factor) / factor
        text = f"{rounded:.{decimals}f}"
        if len(text) <= 8:
            return text
    raise EdfError(f"Physical value {value!r} does not fit an EDF header field")


def write_edf(rec: Recording, record_seconds: float = 1.0) -> bytes:
    """
    Encode a Recording as EDF with one shared rate and 1-s records.

    Each channel's physical range is taken from its data. A trailing partial
    record is padded by repeating the last sample.
    """
    per_record = int(round(rec.rate_hz * record_seconds))
    if per_record < 1:
        raise EdfError(f"Record of {record_seconds} s holds no samples at {rec.rate_hz} Hz")
    n = rec.duration_samples
    if n == 0:
        raise EdfError(f"Recording {rec.id} is empty")
    n_records = -(-n // per_record)
    data = rec.data
    if n_records * per_record > n:
        fill = np.repeat(data[-1:], n_records * per_record - n, axis=0)
        data = np.concatenate([data, fill])

    phys_min = data.min(axis=0)
    phys_max = data.max(axis=0)
    flat = phys_max <= phys_min
    phys_min = np.where(flat, phys_min - 1.0, phys_min)
    phys_max = np.where(flat, phys_max + 1.0, phys_max)
    min_fields = [_edf_number(v, np.floor) for v in phys_min]
    max_fields = [_edf_number(v, np.ceil) for v in phys_max]
    phys_min = np.array([float(v) for v in min_fields])
    phys_max = np.array([float(v) for v in max_fields])

    scale = (EDF_DIGITAL_MAX - EDF_DIGITAL_MIN) / (phys_max - phys_min)
    digital = np.round((data - phys_min) * scale + EDF_DIGITAL_MIN)
    digital = np.clip(digital, EDF_DIGITAL_MIN, EDF_DIGITAL_MAX).astype("<i2")

    ns = rec.n_channels
    header = b"".join([
        _pad_field("0", 8),
        _pad_field("X X X X", 80),
        _pad_field(f"Startdate X {rec.id or 'X'}", 80),
        _pad_field("01.01.00", 8),
        _pad_field("00.00.00", 8),
        _pad_field(EDF_BASE_HEADER_BYTES + EDF_SIGNAL_HEADER_BYTES * ns, 8),
        _pad_field("", 44),
        _pad_field(n_records, 8),
        _pad_field(float(record_seconds), 8),
        _pad_field(ns, 4),
    ])
    columns = {
        "label": list(rec.channel_names),
        "transducer": [""] * ns,
        "physical_dimension": ["uV"] * ns,
        "physical_min": min_fields,
        "physical_max": max_fields,
        "digital_min": [EDF_DIGITAL_MIN] * ns,
        "digital_max": [EDF_DIGITAL_MAX] * ns,
        "prefilter": [""] * ns,
        "samples_per_record": [per_record] * ns,
        "reserved": [""] * ns,
    }
    for name, width in _SIGNAL_FIELDS:
        header += b"".join(_pad_field(v, width) for v in columns[name])

    # samples x signals -> records x signals x samples
    body = digital.reshape(n_records, per_record, ns).transpose(0, 2, 1)
    return header + np.ascontiguousarray(body).tobytes()


def select_channels(rec: Recording, names: list[str] | tuple[str, ...]) -> Recording:
    """Restrict a recording to the named channels, in the requested order."""
    missing = [n for n in names if n not in rec.channel_names]
    if missing:
        raise ChannelError(
            f"Recording {rec.id} has no channel(s) {', '.join(missing)} "
            f"(available: {', '.join(rec.channel_names)})"
        )
    idx = [rec.channel_names.index(n) for n in names]
    return Recording(rec.id, rec.rate_hz, tuple(names), rec.data[:, idx])


# ---------------------------------------------------------------------------
# Scoring files
# ---------------------------------------------------------------------------
def declared_duration(text: str) -> int | None:
    """Sample count from a `# duration=N` header line, or None when absent."""
    for line in text.splitlines():
        line = line.strip()
        if not line.startswith("#"):
            continue
        key, _, value = line[1:].strip().partition("=")
        if key.strip() == "duration":
            try:
                return int(value)
            except ValueError:
                raise LabelFileError(f"Bad duration header {line!r}") from None
    return None


def parse_labels(text: str, duration_samples: int) -> LabelTrack:
    """
    Parse `start_sample,end_sample_exclusive,class` rows into a per-sample track.

    Samples covered by no interval are W. Lines starting with # are comments;
    a `# duration=N` header must equal duration_samples.
    """
    declared = declared_duration(text)
    if declared is not None and declared != duration_samples:
        raise LabelFileError(f"Scoring covers {declared} samples, expected {duration_samples}")
    labels = np.full(duration_samples, Label.W, dtype=np.int8)
    intervals: list[tuple[int, int, Label, int]] = []

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise LabelFileError(f"Line {lineno}: expected start,end,class, got {line!r}")
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise LabelFileError(f"Line {lineno}: non-integer bounds in {line!r}") from None
        cls = Label.from_name(parts[2])
        if not 0 <= start < end <= duration_samples:
            raise LabelFileError(
                f"Line {lineno}: interval [{start}, {end}) outside 0..{duration_samples}"
            )
        intervals.append((start, end, cls, lineno))

    intervals.sort()
    for (s0, e0, _, l0), (s1, e1, _, l1) in zip(intervals, intervals[1:]):
        if s1 < e0:
            raise LabelFileError(
                f"Overlapping intervals [{s0}, {e0}) (line {l0}) and [{s1}, {e1}) (line {l1})"
            )

    for start, end, cls, _ in intervals:
        labels[start:end] = cls
    return LabelTrack(labels)


def label_runs(labels: np.ndarray) -> list[tuple[int, int, int]]:
    """Maximal runs of equal codes as (start, end_exclusive, code)."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    bounds = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [labels.size]])
    return [(int(s), int(e), int(labels[s])) for s, e in zip(starts, ends)]


def write_labels(track: LabelTrack) -> str:
    """Inverse of parse_labels: one line per non-W run."""
    lines = [f"# duration={len(track)}", "# start_sample,end_sample_exclusive,class"]
    for start, end, code in label_runs(track.labels):
        if code != Label.W:
            lines.append(f"{start},{end},{Label(code).name}")
    return "\n".join(lines) + "\n"
