"""Load recordings from EDF or the conditioned cache, and scoring files next to them."""

from pathlib import Path

from .config import CONDITIONED_SUFFIX, EDF_SUFFIX, LABELS_SUFFIX
from .container import ContainerError, pack, unpack
from .ingest import LabelTrack, Recording, declared_duration, parse_edf, parse_labels

CONDITIONED_MAGIC = "MICROSLEEP-COND"


def recording_id(filepath: Path) -> str:
    """File name without the known suffix: 'y5We.edf' -> 'y5We'."""
    name = filepath.name
    for suffix in (LABELS_SUFFIX, CONDITIONED_SUFFIX, EDF_SUFFIX):
        if name.lower().endswith(suffix):
            return name[: -len(suffix)]
    return filepath.stem


def load_recording(filepath: Path) -> Recording:
    suffix = filepath.suffix.lower()
    if suffix == EDF_SUFFIX:
        return parse_edf(filepath.read_bytes(), recording_id(filepath))
    elif suffix == CONDITIONED_SUFFIX:
        return _load_conditioned(filepath)
    else:
        raise ValueError(f"Unsupported file type: {suffix}")


def conditioned_bytes(rec: Recording) -> bytes:
    meta = {"id": rec.id, "rate_hz": rec.rate_hz, "channels": list(rec.channel_names)}
    return pack(CONDITIONED_MAGIC, {"data": rec.data}, meta, dtype="<f8")


def save_conditioned(rec: Recording, path: Path) -> Path:
    path.write_bytes(conditioned_bytes(rec))
    return path


def _load_conditioned(filepath: Path) -> Recording:
    try:
        meta, tensors = unpack(filepath.read_bytes(), CONDITIONED_MAGIC)
    except ContainerError as e:
        raise ContainerError(f"{filepath.name}: {e}") from None
    return Recording(meta["id"], float(meta["rate_hz"]), tuple(meta["channels"]), tensors["data"])


def load_labels(filepath: Path, duration_samples: int) -> LabelTrack:
    return parse_labels(filepath.read_text(encoding="utf-8"), duration_samples)


def find_labels(data_dir: Path, rec_id: str) -> Path | None:
    path = data_dir / f"{rec_id}{LABELS_SUFFIX}"
    return path if path.exists() else None


def scoring_duration(labels_path: Path) -> int | None:
    """
    Length in samples of the recording a scoring file belongs to: its
    `# duration=` header, else the conditioned cache or EDF beside it.
    """
    declared = declared_duration(labels_path.read_text(encoding="utf-8"))
    if declared is not None:
        return declared
    rec_id = recording_id(labels_path)
    for suffix in (CONDITIONED_SUFFIX, EDF_SUFFIX):
        path = labels_path.parent / f"{rec_id}{suffix}"
        if path.exists():
            return load_recording(path).duration_samples
    return None
