"""Output writers: prediction tracks, episodes, embeddings, training history and kappa reports."""

import io
import logging
import math
from pathlib import Path

import numpy as np

from .config import CLASS_NAMES
from .embedding import FeatureSet, TsneResult
from .evaluation import KappaReport, reference_kappas
from .segmentation import Episode, PredictionTrack
from .trainer import History

logger = logging.getLogger("microsleep")


def _rows(array: np.ndarray, fmt) -> str:
    buf = io.StringIO()
    np.savetxt(buf, array, fmt=fmt, delimiter=",")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Prediction tracks
# ---------------------------------------------------------------------------
def format_prediction(track: PredictionTrack, per_interval: bool = False) -> str:
    """
    `index,label,p<class>...` rows after `# key=value` header lines.

    With `per_interval`, one row per coarse interval: the interval's first
    sample, its label and the mean probabilities over the interval.
    """
    names = track.class_names
    lines = [
        f"# arch={track.arch_id} resolution={track.resolution_samples} "
        f"coarse={track.coarse_samples} classes={'|'.join(names)}",
        "# index,label," + ",".join(f"p{name}" for name in names),
    ]
    n = len(track)
    if per_interval and track.coarse_samples > 1:
        starts = np.arange(0, n, track.coarse_samples)
        probs = np.add.reduceat(track.probs.astype(np.float64), starts, axis=0)
        probs /= np.diff(np.append(starts, n))[:, None]
        labels = track.labels[starts]
    else:
        starts = np.arange(n)
        probs = track.probs
        labels = track.labels
    label_names = np.asarray(names, dtype=object)[labels]
    body = np.column_stack([starts.astype(object), label_names, probs.astype(np.float64).astype(object)])
    return "\n".join(lines) + "\n" + _rows(body, ["%d", "%s"] + ["%.6f"] * len(names))


def write_prediction(track: PredictionTrack, path: Path, per_interval: bool = False) -> Path:
    path.write_text(format_prediction(track, per_interval), encoding="utf-8")
    return path


def read_prediction(path: Path) -> PredictionTrack:
    """Parse a per-sample prediction file back into a track."""
    header = {}
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("# ") and "=" in line:
            header.update(item.split("=", 1) for item in line[2:].split())
        elif line and not line.startswith("#"):
            rows.append(line.split(","))
    names = tuple(header.get("classes", "|".join(CLASS_NAMES)).split("|"))
    if int(header.get("coarse", 0)) > 1:
        raise ValueError(f"{path.name} is a coarse track; evaluate the per-sample file")
    lookup = {name: code for code, name in enumerate(names)}
    try:
        labels = np.array([lookup[r[1]] for r in rows], dtype=np.int8)
        probs = np.array([[float(v) for v in r[2:]] for r in rows], dtype=np.float64)
    except (KeyError, IndexError, ValueError) as e:
        raise ValueError(f"Malformed prediction file {path.name}: {e}") from None
    return PredictionTrack(
        probs=probs.reshape(len(rows), len(names)),
        labels=labels,
        resolution_samples=int(header.get("resolution", 1)),
        class_names=names,
        arch_id=header.get("arch", ""),
    )


# ---------------------------------------------------------------------------
# Episodes and embeddings
# ---------------------------------------------------------------------------
def write_episodes(episodes: list[Episode], path: Path, class_names=CLASS_NAMES) -> Path:
    lines = ["# start_sample,end_sample_exclusive,class,flag"]
    lines += [f"{e.start_sample},{e.end_sample},{class_names[e.label]},{e.flag}" for e in episodes]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_embedding(result: TsneResult, features: FeatureSet, path: Path) -> Path:
    lines = [
        f"# kl_initial={result.kl_initial:.6f} kl_final={result.kl_final:.6f}",
        "# x,y,label,sample_index",
    ]
    for (x, y), label, index in zip(result.coords, features.labels, features.indices):
        name = CLASS_NAMES[label] if label >= 0 else "-"
        lines.append(f"{x:.6f},{y:.6f},{name},{index}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Training history
# ---------------------------------------------------------------------------
def format_history(history: History) -> str:
    lines = ["# step,loss"]
    lines += [f"{step},{loss:.8f}" for step, loss in history.losses]
    lines.append("# iteration,class,kappa")
    for iteration, kappas in history.snapshots:
        lines += [f"{iteration},{name},{kappa:.6f}" for name, kappa in kappas.items()]
    return "\n".join(lines) + "\n"


def write_history(history: History, path: Path) -> Path:
    path.write_text(format_history(history), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Kappa reports
# ---------------------------------------------------------------------------
def _cell(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{value:.2f}"


def format_report(rows: list[tuple[str, KappaReport]], split: str = "validation") -> str:
    """
    Kappa table with W, MSE, MSEc and ED columns, one row per label, followed
    by the published row for that label when one exists, then per-report
    accuracy, sensitivity and specificity.
    """
    width = max([len(label) for label, _ in rows] + [10]) + 8
    out = [f"{'':<{width}}" + "".join(f"{name:>8}" for name in CLASS_NAMES)]
    for label, report in rows:
        kappas = report.table3_kappas()
        out.append(f"{label:<{width}}" + "".join(f"{_cell(kappas.get(n)):>8}" for n in CLASS_NAMES))
        published = reference_kappas(label, split)
        if published:
            out.append(
                f"{label + ' (published)':<{width}}"
                + "".join(f"{_cell(published.get(n)):>8}" for n in CLASS_NAMES)
            )
    for label, report in rows:
        out.append("")
        out.append(f"{label}: {report.total} samples, accuracy {report.accuracy:.4f}")
        for name in report.class_names:
            out.append(
                f"  {name:<7} sensitivity {_cell(report.sensitivity[name])}  "
                f"specificity {_cell(report.specificity[name])}"
            )
    return "\n".join(out) + "\n"


def write_report(rows: list[tuple[str, KappaReport]], path: Path, split: str = "validation") -> Path:
    path.write_text(format_report(rows, split), encoding="utf-8")
    return path
