"""
Synthetic MWT-like recordings with known scoring.

Wake is a 10 Hz (alpha) rhythm, MSE a 5 Hz (theta) rhythm, and the two
borderline classes mix the two. The EOG channels carry slow 0.3 Hz waves
during each MSE and shortly before it, with opposite polarity on E2M1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import ALL_CHANNELS, SAMPLE_RATE_HZ
from .ingest import Label, LabelTrack, Recording

logger = logging.getLogger("microsleep")

ALPHA_HZ = 10.0
THETA_HZ = 5.0
SLOW_EYE_HZ = 0.3
AMPLITUDE_RANGE_UV = (30.0, 60.0)


class SynthError(ValueError):
    """Span statistics that cannot be realized."""


@dataclass(frozen=True)
class SynthConfig:
    duration_s: float = 600.0
    mse_fraction: float = 0.08
    msec_fraction: float = 0.01
    ed_fraction: float = 0.02
    mse_min_s: float = 1.0
    mse_max_s: float = 15.0
    borderline_min_s: float = 1.0
    borderline_max_s: float = 10.0
    min_gap_s: float = 2.0
    eog_lead_s: float = 2.0
    noise_uv: float = 5.0
    rate_hz: float = SAMPLE_RATE_HZ

    def validate(self) -> None:
        if self.duration_s <= 0 or self.rate_hz <= 0:
            raise SynthError("Duration and sampling rate must be positive")
        fractions = (self.mse_fraction, self.msec_fraction, self.ed_fraction)
        if any(f < 0 for f in fractions) or sum(fractions) >= 1:
            raise SynthError(f"Event fractions must be non-negative and sum below 1, got {fractions}")
        if not 0 < self.mse_min_s <= self.mse_max_s:
            raise SynthError(f"Invalid MSE duration band {self.mse_min_s}-{self.mse_max_s} s")
        if not 0 < self.borderline_min_s <= self.borderline_max_s:
            raise SynthError(
                f"Invalid borderline duration band {self.borderline_min_s}-{self.borderline_max_s} s"
            )
        if self.min_gap_s < 0 or self.noise_uv < 0 or self.eog_lead_s < 0:
            raise SynthError("Gap, lead and noise values must be non-negative")


def _draw_spans(rng: np.random.Generator, target: int, lo: int, hi: int) -> list[int]:
    """Durations in [lo, hi] samples whose sum reaches `target` within lo samples."""
    spans, total = [], 0
    while total < target:
        d = int(rng.integers(lo, hi + 1))
        if total + d > target:
            d = target - total
            if d < lo:
                break
        spans.append(d)
        total += d
    return spans


def generate(config: SynthConfig = SynthConfig(), seed: int = 0,
             recording_id: str = "synth") -> tuple[Recording, LabelTrack]:
    config.validate()
    rng = np.random.default_rng(seed)
    rate = config.rate_hz
    n = int(round(config.duration_s * rate))

    events: list[tuple[int, int]] = []
    for code, fraction, lo_s, hi_s in (
        (Label.MSE, config.mse_fraction, config.mse_min_s, config.mse_max_s),
        (Label.MSEc, config.msec_fraction, config.borderline_min_s, config.borderline_max_s),
        (Label.ED, config.ed_fraction, config.borderline_min_s, config.borderline_max_s),
    ):
        lo, hi = int(np.ceil(lo_s * rate)), int(np.floor(hi_s * rate))
        if lo > hi:
            raise SynthError(f"No whole-sample duration fits {lo_s}-{hi_s} s at {rate} Hz")
        events += [(int(code), d) for d in _draw_spans(rng, int(round(fraction * n)), lo, hi)]
    events = [events[i] for i in rng.permutation(len(events))]

    # at least one wake sample between events keeps spans from merging
    min_gap = max(1, int(round(config.min_gap_s * rate)))
    wake_total = n - sum(d for _, d in events)
    n_gaps = len(events) + 1
    spare = wake_total - n_gaps * min_gap
    if spare < 0:
        raise SynthError(
            f"{len(events)} events leave {wake_total / rate:.1f} s of wake, less than "
            f"{n_gaps} gaps of {config.min_gap_s} s"
        )
    gaps = min_gap + rng.multinomial(spare, rng.dirichlet(np.ones(n_gaps)))

    labels = np.full(n, Label.W, dtype=np.int8)
    cursor = int(gaps[0])
    for (code, d), gap in zip(events, gaps[1:]):
        labels[cursor:cursor + d] = code
        cursor += d + int(gap)

    data = _render_signals(labels, config, rng)
    logger.debug(
        f"Synthesized {recording_id}: {n} samples, {len(events)} events, "
        f"MSE fraction {np.mean(labels == Label.MSE):.3f}"
    )
    return Recording(recording_id, rate, ALL_CHANNELS, data), LabelTrack(labels)


def _render_signals(labels: np.ndarray, config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    rate = config.rate_hz
    n = labels.size
    t = np.arange(n) / rate

    # per-sample weight of the theta rhythm (1 = pure MSE, 0 = pure wake)
    theta_weight = np.select(
        [labels == Label.MSE, labels == Label.MSEc, labels == Label.ED],
        [1.0, 0.7, 0.4],
        default=0.0,
    )
    eeg = []
    for _ in range(2):
        amplitude = rng.uniform(*AMPLITUDE_RANGE_UV)
        phase_a, phase_t = rng.uniform(0, 2 * np.pi, size=2)
        alpha = np.sin(2 * np.pi * ALPHA_HZ * t + phase_a)
        theta = np.sin(2 * np.pi * THETA_HZ * t + phase_t)
        signal = amplitude * ((1.0 - theta_weight) * alpha + theta_weight * theta)
        eeg.append(signal + rng.normal(0.0, config.noise_uv, n))

    # slow eye movements during each MSE and the lead-in before it
    slow = np.zeros(n, dtype=bool)
    lead = int(round(config.eog_lead_s * rate))
    is_mse = labels == Label.MSE
    starts = np.flatnonzero(is_mse & ~np.concatenate([[False], is_mse[:-1]]))
    slow |= is_mse
    for s in starts:
        slow[max(0, s - lead):s] = True
    eye_amplitude = rng.uniform(*AMPLITUDE_RANGE_UV)
    wave = eye_amplitude * np.sin(2 * np.pi * SLOW_EYE_HZ * t) * slow
    e1 = wave + rng.normal(0.0, config.noise_uv, n)
    e2 = -wave + rng.normal(0.0, config.noise_uv, n)

    return np.column_stack(eeg + [e1, e2])


def generate_corpus(n_recordings: int, config: SynthConfig = SynthConfig(), seed: int = 0,
                    prefix: str = "synth") -> list[tuple[Recording, LabelTrack]]:
    """Independent recordings, each seeded from (seed, index)."""
    if n_recordings < 1:
        raise SynthError(f"Need at least one recording, got {n_recordings}")
    return [
        generate(config, seed=np.random.default_rng([seed, i]).integers(2**32), recording_id=f"{prefix}{i:03d}")
        for i in range(n_recordings)
    ]
