"""Hidden-representation extraction from the embedding network and exact t-SNE."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .architectures import EMBEDDING_FILTERS
from .config import EMBED_STRIDE, TSNE_ITERATIONS, TSNE_PERPLEXITY
from .dataset import pad_for_windows
from .ingest import LabelTrack, Recording
from .network import Network
from .segmentation import prepare_input

logger = logging.getLogger("microsleep")

EARLY_EXAGGERATION = 4.0
EXAGGERATION_ITERATIONS = 100
MOMENTUM_SWITCH = 250
INITIAL_MOMENTUM = 0.5
FINAL_MOMENTUM = 0.8
LEARNING_RATE = 200.0
MIN_GAIN = 0.01
PERPLEXITY_TOL = 1e-4
MAX_BISECTION_STEPS = 200


class EmbeddingError(ValueError):
    """Features or projection request are invalid."""


@dataclass
class FeatureSet:
    vectors: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass
class TsneResult:
    coords: np.ndarray = field(repr=False)
    kl_initial: float
    kl_final: float


def extract_features(network: Network, rec: Recording, labels: LabelTrack | np.ndarray | None = None,
                     stride: int = EMBED_STRIDE, batch_size: int = 256) -> FeatureSet:
    """The 64-d embedding of the window centered on every `stride`-th sample."""
    spec = network.spec
    if not spec.embedding or network.is_sequence:
        raise EmbeddingError(f"{spec.arch_id} has no embedding block; train it with --embedding")
    if stride < 1:
        raise EmbeddingError(f"Stride must be positive, got {stride}")
    x = prepare_input(rec, spec, network.dtype)
    n = x.shape[0]
    if n == 0:
        raise EmbeddingError(f"Recording {rec.id} is empty")

    centers = np.arange(0, n, stride)
    windows = sliding_window_view(pad_for_windows(x, spec.window_samples), spec.window_samples, axis=0)
    vectors = np.concatenate([
        network.features(np.ascontiguousarray(windows[centers[i:i + batch_size]].transpose(0, 2, 1)))
        for i in range(0, centers.size, batch_size)
    ])
    if vectors.shape[1] != EMBEDDING_FILTERS:
        raise EmbeddingError(f"Expected {EMBEDDING_FILTERS}-d features, got {vectors.shape[1]}")

    if labels is None:
        center_labels = np.full(centers.size, -1, dtype=np.int8)
    else:
        track = labels.labels if isinstance(labels, LabelTrack) else np.asarray(labels)
        if track.shape[0] != n:
            raise EmbeddingError(f"Labels cover {track.shape[0]} samples, recording has {n}")
        center_labels = track[centers]
    return FeatureSet(vectors=vectors.astype(np.float64), labels=center_labels, indices=centers)


# ---------------------------------------------------------------------------
# t-SNE
# ---------------------------------------------------------------------------
def _squared_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _row_entropy(dist: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """Shannon entropy (nats) and probabilities of exp(-beta * dist)."""
    # shifting by the minimum keeps exp() finite and leaves p unchanged
    shifted = dist - dist.min()
    weights = np.exp(-shifted * beta)
    total = weights.sum()
    p = weights / total
    entropy = np.log(total) + beta * np.sum(shifted * p)
    return float(entropy), p


def conditional_affinities(x: np.ndarray, perplexity: float, tol: float = PERPLEXITY_TOL) -> np.ndarray:
    """Row-stochastic P(j|i), with each row's precision bisected to the target perplexity."""
    n = x.shape[0]
    dist = _squared_distances(np.asarray(x, dtype=np.float64))
    target = np.log(perplexity)
    P = np.zeros((n, n))
    others = ~np.eye(n, dtype=bool)
    for i in range(n):
        row = dist[i, others[i]]
        beta, lo, hi = 1.0, 0.0, np.inf
        entropy, p = _row_entropy(row, beta)
        for _ in range(MAX_BISECTION_STEPS):
            diff = entropy - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
            entropy, p = _row_entropy(row, beta)
        P[i, others[i]] = p
    return P


def joint_affinities(x: np.ndarray, perplexity: float) -> np.ndarray:
    P = conditional_affinities(x, perplexity)
    return (P + P.T) / (2.0 * P.shape[0])


def _student_q(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    num = 1.0 / (1.0 + _squared_distances(y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-12))))


def tsne(features, perplexity: float = TSNE_PERPLEXITY, iterations: int = TSNE_ITERATIONS,
         seed: int = 0, learning_rate: float = LEARNING_RATE) -> TsneResult:
    """
    Exact t-SNE to two dimensions.

    Early exaggeration x4 for the first 100 iterations; momentum 0.5 then 0.8
    from iteration 250; per-coordinate adaptive gains.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise EmbeddingError(f"Features must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if n < 3:
        raise EmbeddingError(f"t-SNE needs at least 3 points, got {n}")
    if not 0 < perplexity < n:
        raise EmbeddingError(f"Perplexity must be in (0, {n}), got {perplexity}")
    if iterations < 1:
        raise EmbeddingError(f"Iterations must be positive, got {iterations}")

    P = np.maximum(joint_affinities(x, perplexity), 1e-12)
    np.fill_diagonal(P, 0.0)
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((n, 2)) * 1e-4
    step = np.zeros_like(y)
    gains = np.ones_like(y)

    kl_initial = kl_divergence(P, _student_q(y)[0])
    logger.debug(f"t-SNE on {n} points, initial KL {kl_initial:.4f}")

    for it in range(iterations):
        exaggeration = EARLY_EXAGGERATION if it < EXAGGERATION_ITERATIONS else 1.0
        momentum = INITIAL_MOMENTUM if it < MOMENTUM_SWITCH else FINAL_MOMENTUM
        Q, num = _student_q(y)
        forces = (exaggeration * P - Q) * num
        grad = 4.0 * (np.sum(forces, axis=1)[:, None] * y - forces @ y)

        same_sign = (grad > 0) == (step > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        step = momentum * step - learning_rate * gains * grad
        y = y + step
        y -= y.mean(axis=0)

        if (it + 1) % 100 == 0:
            logger.debug(f"  t-SNE iteration {it + 1}: KL {kl_divergence(P, _student_q(y)[0]):.4f}")

    kl_final = kl_divergence(P, _student_q(y)[0])
    return TsneResult(coords=y, kl_initial=kl_initial, kl_final=kl_final)
