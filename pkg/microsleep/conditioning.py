"""Signal conditioning: Fourier band-pass filtering and the two input normalizations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft

from .config import BAND_HIGH_HZ, BAND_LOW_HZ, SAMPLE_RATE_HZ
from .ingest import Recording


class BandError(ValueError):
    """Invalid band or signal for filtering."""


@dataclass(frozen=True)
class BandSpec:
    low_hz: float = BAND_LOW_HZ
    high_hz: float = BAND_HIGH_HZ
    rate_hz: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        if not 0 < self.low_hz < self.high_hz < self.rate_hz / 2:
            raise BandError(
                f"Band must satisfy 0 < low < high < rate/2, got "
                f"{self.low_hz}/{self.high_hz} Hz at {self.rate_hz} Hz"
            )


def fourier_bandpass(signal, band: BandSpec) -> np.ndarray:
    """
    Zero every Fourier coefficient outside [low_hz, high_hz] and invert.

    The whole signal is transformed at once, with no tapering or padding.
    Edge bins are kept.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise BandError(f"Need a 1-D signal of at least 2 samples, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise BandError("Signal contains non-finite samples")

    # The real transform covers the non-negative bins; negative bins mirror them.
    spectrum = fft.rfft(x)
    freqs = fft.rfftfreq(x.size, d=1.0 / band.rate_hz)
    spectrum[(freqs < band.low_hz) | (freqs > band.high_hz)] = 0.0
    return fft.irfft(spectrum, n=x.size)


def condition_recording(rec: Recording, band: BandSpec | None = None) -> Recording:
    """Band-pass every channel of a recording."""
    band = band or BandSpec(rate_hz=rec.rate_hz)
    filtered = np.column_stack([fourier_bandpass(samples, band) for _, samples in rec.channels])
    return rec.with_data(filtered)


def normalize_cnn(signal) -> np.ndarray:
    """x -> clamp(x / 100, -1, 1)."""
    return np.clip(np.asarray(signal, dtype=np.float64) / 100.0, -1.0, 1.0)


def normalize_lstm(signal) -> np.ndarray:
    """x -> clamp((x + 100) / 200, 0, 1)."""
    return np.clip((np.asarray(signal, dtype=np.float64) + 100.0) / 200.0, 0.0, 1.0)
