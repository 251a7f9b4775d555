"""Per-class Cohen's kappa on concatenated recordings, with the usual companion rates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.metrics import confusion_matrix

from .config import BINARY_CLASS_NAMES, CLASS_NAMES
from .ingest import Label, LabelTrack

# Published per-class kappas (W, MSE, MSEc, ED) on the validation recordings
REFERENCE_KAPPAS = {
    "2s": {"W": 0.58, "MSE": 0.61, "MSEc": 0.02, "ED": 0.05},
    "4s": {"W": 0.62, "MSE": 0.65, "MSEc": 0.03, "ED": 0.07},
    "8s": {"W": 0.63, "MSE": 0.67, "MSEc": 0.07, "ED": 0.11},
    "16s": {"W": 0.67, "MSE": 0.69, "MSEc": 0.04, "ED": 0.06},
    "16s_u": {"W": 0.67, "MSE": 0.69, "MSEc": 0.03, "ED": 0.07},
    "16s_1c": {"W": 0.58, "MSE": 0.64, "MSEc": 0.03, "ED": 0.02},
    "32s": {"W": 0.66, "MSE": 0.69, "MSEc": 0.02, "ED": 0.07},
    "cnn_lstm": {"W": 0.65, "MSE": 0.65},
}

# ... and on the test recordings, published for the 16-s network only
REFERENCE_TEST_KAPPAS = {
    "16s": {"W": 0.59, "MSE": 0.69, "MSEc": 0.05, "ED": 0.11},
}


class EvaluationError(ValueError):
    """Sequences cannot be compared."""


@dataclass
class KappaReport:
    """Rows of `confusion` are the reference, columns the prediction."""
    class_names: tuple[str, ...]
    kappas: dict[str, float]
    confusion: np.ndarray = field(repr=False)
    accuracy: float
    sensitivity: dict[str, float]
    specificity: dict[str, float]
    total: int

    def table3_kappas(self) -> dict[str, float]:
        """Kappas keyed by W/MSE/MSEc/ED; a binary report fills W with its non-MSE kappa."""
        if self.class_names == BINARY_CLASS_NAMES:
            return {"W": self.kappas["nonMSE"], "MSE": self.kappas["MSE"]}
        return dict(self.kappas)


@dataclass(frozen=True)
class ReferenceComparison:
    arch_id: str
    split: str
    deltas: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(abs(d) <= self.tolerance for d in self.deltas.values())


def _as_labels(seq) -> np.ndarray:
    return np.asarray(seq.labels if isinstance(seq, LabelTrack) else seq).ravel()


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise EvaluationError(f"Length mismatch: {a.size} vs {b.size} samples")
    if a.size == 0:
        raise EvaluationError("Cannot compare empty sequences")


def _kappa_from_counts(counts: np.ndarray) -> float:
    total = counts.sum()
    p_o = np.trace(counts) / total
    p_e = float(np.dot(counts.sum(axis=0), counts.sum(axis=1))) / float(total) ** 2
    if p_e >= 1.0:
        # both sequences constant and equal
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def cohen_kappa(a, b) -> float:
    """kappa = (p_o - p_e) / (1 - p_e); 0 when chance agreement is 1."""
    a, b = _as_labels(a), _as_labels(b)
    _check_pair(a, b)
    classes = np.union1d(a, b)
    return _kappa_from_counts(confusion_matrix(a, b, labels=classes))


def per_class_kappa(pred, ref, k: int) -> float:
    """Kappa after mapping class k to 1 and every other class to 0."""
    pred, ref = _as_labels(pred), _as_labels(ref)
    _check_pair(pred, ref)
    return cohen_kappa((pred == k).astype(np.int8), (ref == k).astype(np.int8))


def _binary_counts(counts: np.ndarray, k: int) -> np.ndarray:
    """2x2 one-vs-rest counts for class k out of a full confusion matrix."""
    tp = counts[k, k]
    fn = counts[k].sum() - tp
    fp = counts[:, k].sum() - tp
    tn = counts.sum() - tp - fn - fp
    return np.array([[tn, fp], [fn, tp]])


def _rate(num: float, den: float) -> float:
    return float(num / den) if den else float("nan")


def report_from_confusion(counts: np.ndarray, class_names: Sequence[str] = CLASS_NAMES) -> KappaReport:
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        raise EvaluationError("No samples to evaluate")
    kappas, sensitivity, specificity = {}, {}, {}
    for k, name in enumerate(class_names):
        binary = _binary_counts(counts, k)
        (tn, fp), (fn, tp) = binary
        kappas[name] = _kappa_from_counts(binary)
        sensitivity[name] = _rate(tp, tp + fn)
        specificity[name] = _rate(tn, tn + fp)
    return KappaReport(
        class_names=tuple(class_names),
        kappas=kappas,
        confusion=counts,
        accuracy=float(np.trace(counts) / total),
        sensitivity=sensitivity,
        specificity=specificity,
        total=total,
    )


def concatenated_report(pairs: Sequence[tuple], class_names: Sequence[str] = CLASS_NAMES) -> KappaReport:
    """
    Concatenate every (prediction, reference) pair and score the result.

    Scoring is at whatever resolution the tracks are given in.
    """
    if not pairs:
        raise EvaluationError("No recordings to evaluate")
    n_classes = len(class_names)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    for i, (pred, ref) in enumerate(pairs):
        pred, ref = _as_labels(pred), _as_labels(ref)
        try:
            _check_pair(pred, ref)
        except EvaluationError as e:
            raise EvaluationError(f"Pair {i}: {e}") from None
        counts += confusion_matrix(ref, pred, labels=np.arange(n_classes))
    return report_from_confusion(counts, class_names)


def binarize_reference(labels) -> np.ndarray:
    """MSE -> 1, everything else -> 0, for scoring two-class predictions."""
    return (_as_labels(labels) == Label.MSE).astype(np.int8)


def inter_rater_report(scoring_a: Sequence, scoring_b: Sequence) -> KappaReport:
    """Agreement between two expert scorings of the same recordings."""
    if len(scoring_a) != len(scoring_b):
        raise EvaluationError(
            f"Scorings cover {len(scoring_a)} and {len(scoring_b)} recordings"
        )
    return concatenated_report(list(zip(scoring_a, scoring_b)))


def reference_kappas(arch_id: str, split: str = "validation") -> dict[str, float] | None:
    table = REFERENCE_TEST_KAPPAS if split == "test" else REFERENCE_KAPPAS
    return table.get(arch_id)


def compare_to_reference(report: KappaReport, arch_id: str, tolerance: float = 0.15,
                         split: str = "validation") -> ReferenceComparison:
    reference = reference_kappas(arch_id, split)
    if reference is None:
        raise EvaluationError(f"No published {split} kappas for {arch_id}")
    ours = report.table3_kappas()
    deltas = {name: ours[name] - value for name, value in reference.items() if name in ours}
    return ReferenceComparison(arch_id, split, deltas, tolerance)
