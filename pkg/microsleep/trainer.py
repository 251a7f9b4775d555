"""Training loop: batch sampling, weighted loss, Nadam updates, checkpoints and history."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .architectures import CNN_LSTM, NetworkSpec
from .checkpoint import save_checkpoint
from .conditioning import normalize_cnn, normalize_lstm
from .config import BINARY_CLASS_NAMES, CHECKPOINT_SUFFIX, CLASS_NAMES
from .dataset import (
    BatchSampler, SequenceSampler, SplitPlan, WindowBatch, binary_mse_labels, class_weights,
    stage_fractions,
)
from .evaluation import binarize_reference, concatenated_report
from .ingest import LabelTrack, Recording
from .layers import weighted_cross_entropy, weighted_cross_entropy_grad
from .network import Network
from .optim import OptimizerState, clip_grad_norm, nadam_step
from .segmentation import predict

logger = logging.getLogger("microsleep")

CNN_DEFAULTS = {"batch_size": 200, "iterations": 3}
LSTM_DEFAULTS = {"batch_size": 128, "iterations": 8, "clip_norm": 1.0}


class TrainConfigError(ValueError):
    """Inconsistent training configuration."""


@dataclass(frozen=True)
class TrainConfig:
    """None fields take the family default when resolved against a NetworkSpec."""
    arch: str = "16s"
    weighting: str | None = None
    batch_size: int | None = None
    iterations: int | None = None
    lr: float = 0.002
    clip_norm: float | None = None
    seed: int = 0
    batches_per_iteration: int | None = None
    embedding: bool = False
    log_every: int = 100

    def resolve(self, spec: NetworkSpec) -> "TrainConfig":
        lstm = spec.family == CNN_LSTM
        defaults = LSTM_DEFAULTS if lstm else CNN_DEFAULTS
        if not lstm and self.clip_norm is not None:
            raise TrainConfigError("Gradient clipping applies to the CNN-LSTM only")
        cfg = replace(
            self,
            weighting=self.weighting or spec.weighting,
            batch_size=self.batch_size or defaults["batch_size"],
            iterations=self.iterations or defaults["iterations"],
            clip_norm=self.clip_norm if self.clip_norm is not None else defaults.get("clip_norm"),
        )
        if cfg.weighting not in ("inverse", "uniform"):
            raise TrainConfigError(f"Unknown weighting {cfg.weighting!r} (expected inverse or uniform)")
        for name in ("batch_size", "iterations"):
            if getattr(cfg, name) < 1:
                raise TrainConfigError(f"{name} must be positive, got {getattr(cfg, name)}")
        if cfg.lr <= 0:
            raise TrainConfigError(f"Learning rate must be positive, got {cfg.lr}")
        if cfg.clip_norm is not None and cfg.clip_norm <= 0:
            raise TrainConfigError(f"Clip norm must be positive, got {cfg.clip_norm}")
        if cfg.batches_per_iteration is not None and cfg.batches_per_iteration < 1:
            raise TrainConfigError("batches_per_iteration must be positive when set")
        return cfg


class Corpus:
    """Conditioned recordings and their scorings, with a log of who read what."""

    def __init__(self, recordings: dict[str, Recording], tracks: dict[str, LabelTrack]):
        missing = sorted(set(recordings) - set(tracks))
        if missing:
            raise KeyError(f"No scoring for recording(s): {', '.join(missing)}")
        self._recordings = dict(recordings)
        self._tracks = dict(tracks)
        self.access_log: list[tuple[str, str]] = []

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[Recording, LabelTrack]]) -> "Corpus":
        return cls({rec.id: rec for rec, _ in pairs}, {rec.id: track for rec, track in pairs})

    @property
    def ids(self) -> list[str]:
        return sorted(self._recordings)

    def get(self, rec_id: str, purpose: str) -> tuple[Recording, LabelTrack]:
        self.access_log.append((purpose, rec_id))
        return self._recordings[rec_id], self._tracks[rec_id]

    def read(self, ids: Sequence[str], purpose: str) -> tuple[list[Recording], list[LabelTrack]]:
        pairs = [self.get(i, purpose) for i in ids]
        return [rec for rec, _ in pairs], [track for _, track in pairs]

    def ids_read_for(self, purpose: str) -> set[str]:
        return {rec_id for p, rec_id in self.access_log if p == purpose}


@dataclass
class History:
    losses: list[tuple[int, float]] = field(default_factory=list)
    snapshots: list[tuple[int, dict[str, float]]] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)


def train_step(network: Network, batch: WindowBatch, state: OptimizerState,
               clip_norm: float | None, rng: np.random.Generator) -> float:
    """One forward/backward/update on a batch. Returns the batch loss."""
    probs = network.forward(batch.inputs, train=True, rng=rng)
    loss = weighted_cross_entropy(probs, batch.targets, batch.weights)
    network.backward(weighted_cross_entropy_grad(probs, batch.targets, batch.weights))
    grads = network.gradients()
    if clip_norm is not None:
        grads = clip_grad_norm(grads, clip_norm)
    nadam_step(network.parameters(), grads, state)
    return loss


def evaluate_during_training(network: Network, recordings: Sequence[Recording],
                             tracks: Sequence[LabelTrack]) -> dict[str, float]:
    """Per-class kappa of the current parameters on held-out recordings."""
    names = BINARY_CLASS_NAMES if network.is_sequence else CLASS_NAMES
    pairs = []
    for rec, track in zip(recordings, tracks):
        ref = binarize_reference(track) if network.is_sequence else track.labels
        pairs.append((predict(network, rec).labels, ref))
    return concatenated_report(pairs, names).kappas


def _make_sampler(spec: NetworkSpec, recordings, tracks, cfg: TrainConfig, rng):
    if spec.family == CNN_LSTM:
        labels = np.concatenate([binary_mse_labels(t.labels) for t in tracks])
        weights = class_weights(labels, cfg.weighting, n_classes=2)
        return SequenceSampler(
            recordings, tracks, spec.window_samples, spec.stride_samples, spec.seq_len,
            spec.n_channels, weights, normalize_lstm, rng, spec.channel_names[0],
        )
    labels = np.concatenate([t.labels for t in tracks])
    weights = class_weights(labels, cfg.weighting, n_classes=len(CLASS_NAMES))
    return BatchSampler(
        recordings, tracks, spec.window_samples, spec.n_channels, weights, normalize_cnn, rng,
        spec.channel_names[0],
    )


def train(spec: NetworkSpec, corpus: Corpus, plan: SplitPlan, cfg: TrainConfig,
          checkpoint_dir: Path | None = None) -> tuple[Network, History]:
    """
    Train `spec` on plan.train_ids. After every iteration a checkpoint is
    written (when checkpoint_dir is given) and, if the plan has validation
    recordings, a kappa snapshot is recorded.
    """
    cfg = cfg.resolve(spec)
    if not plan.train_ids:
        raise TrainConfigError("Empty training set")

    recordings, tracks = corpus.read(plan.train_ids, "train")
    fractions = stage_fractions(tracks)
    logger.info(
        f"Training {spec.arch_id} on {len(recordings)} recordings "
        f"({', '.join(f'{n} {f:.3f}' for n, f in zip(CLASS_NAMES, fractions))})"
    )

    init_rng = np.random.default_rng([cfg.seed, 0])
    sample_rng = np.random.default_rng([cfg.seed, 1])
    noise_rng = np.random.default_rng([cfg.seed, 2])

    network = Network(spec, rng=init_rng)
    sampler = _make_sampler(spec, recordings, tracks, cfg, sample_rng)
    state = OptimizerState(lr=cfg.lr)
    history = History()
    logger.info(
        f"  {network.parameter_count():,} parameters, weighting={cfg.weighting}, "
        f"batch={cfg.batch_size}, iterations={cfg.iterations}"
    )

    step = 0
    for iteration in range(1, cfg.iterations + 1):
        started = time.monotonic()
        sampler.start_iteration()
        n_batches = sampler.batches_per_iteration(cfg.batch_size)
        if cfg.batches_per_iteration is not None:
            n_batches = min(n_batches, cfg.batches_per_iteration)
        for _ in range(n_batches):
            batch = sampler.sample_batch(min(cfg.batch_size, sampler.remaining))
            loss = train_step(network, batch, state, cfg.clip_norm, noise_rng)
            step += 1
            history.losses.append((step, loss))
            if step % cfg.log_every == 0:
                logger.info(f"  step {step}: loss {loss:.4f}")

        elapsed = time.monotonic() - started
        logger.info(f"Iteration {iteration}/{cfg.iterations}: {n_batches} batches in {elapsed:.1f}s")
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir) / f"{spec.arch_id}_iter{iteration}{CHECKPOINT_SUFFIX}"
            history.checkpoints.append(save_checkpoint(network, path))
            logger.info(f"  checkpoint: {path}")
        if plan.val_ids:
            val_recs, val_tracks = corpus.read(plan.val_ids, "validation")
            kappas = evaluate_during_training(network, val_recs, val_tracks)
            history.snapshots.append((iteration, kappas))
            logger.info("  validation kappa: " + ", ".join(f"{k} {v:.3f}" for k, v in kappas.items()))

    return network, history
