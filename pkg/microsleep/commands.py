"""One function per CLI subcommand. Each raises on failure and records what it writes."""

import logging
import shutil
from pathlib import Path

from .architectures import build_architecture
from .checkpoint import load_checkpoint
from .conditioning import condition_recording
from .config import (
    CHECKPOINT_SUFFIX, COARSE_SUFFIX, CONDITIONED_SUFFIX, EDF_SUFFIX, EMBEDDING_SUFFIX,
    EPISODES_SUFFIX, LABELS_SUFFIX, PREDICTION_SUFFIX,
)
from .dataset import split_by_patient
from .embedding import extract_features, tsne
from .evaluation import EvaluationError, binarize_reference, concatenated_report, inter_rater_report
from .ingest import write_edf, write_labels
from .loader import (
    find_labels, load_labels, load_recording, recording_id, save_conditioned, scoring_duration,
)
from .segmentation import apply_duration_criteria, coarsen_majority, episodes_from_labels, predict
from .settings import Settings
from .synthgen import SynthConfig, generate_corpus
from .trainer import Corpus, TrainConfig, train
from .writers import read_prediction, write_embedding, write_episodes, write_history, write_prediction
from .writers import write_report

logger = logging.getLogger("microsleep")


class PartialOutputs:
    """Files a command has started writing, removed again if the command fails."""

    def __init__(self):
        self.paths: list[Path] = []

    def add(self, path: Path) -> Path:
        self.paths.append(Path(path))
        return Path(path)

    def remove(self) -> None:
        for path in reversed(self.paths):
            if path.exists():
                path.unlink()
                logger.info(f"  Removed partial output: {path}")
        self.paths.clear()


# ---------------------------------------------------------------------------
# Recording discovery
# ---------------------------------------------------------------------------
def discover_recordings(paths) -> dict[str, Path]:
    """Map recording id -> file; a conditioned cache wins over its EDF."""
    found: dict[str, Path] = {}
    for path in map(Path, paths):
        if path.is_dir():
            candidates = sorted(path.glob(f"*{EDF_SUFFIX}")) + sorted(path.glob(f"*{CONDITIONED_SUFFIX}"))
        elif path.exists():
            candidates = [path]
        else:
            raise FileNotFoundError(f"File not found: {path}")
        for candidate in candidates:
            rec_id = recording_id(candidate)
            if rec_id not in found or candidate.suffix.lower() == CONDITIONED_SUFFIX:
                found[rec_id] = candidate
    return dict(sorted(found.items()))


def load_conditioned(path: Path):
    """Conditioned recording from a cache file, or from an EDF conditioned on the fly."""
    rec = load_recording(path)
    if path.suffix.lower() == EDF_SUFFIX:
        logger.debug(f"  Conditioning {path.name}")
        rec = condition_recording(rec)
    return rec


def load_corpus(data_dir: Path) -> Corpus:
    recordings, tracks = {}, {}
    for rec_id, path in discover_recordings([data_dir]).items():
        labels_path = find_labels(data_dir, rec_id)
        if labels_path is None:
            logger.warning(f"  No scoring for {rec_id}; skipped")
            continue
        rec = load_conditioned(path)
        recordings[rec_id] = rec
        tracks[rec_id] = load_labels(labels_path, rec.duration_samples)
    if not recordings:
        raise ValueError(f"No scored recordings in {data_dir}")
    logger.info(f"Loaded {len(recordings)} scored recordings from {data_dir}")
    return Corpus(recordings, tracks)


# ---------------------------------------------------------------------------
# condition
# ---------------------------------------------------------------------------
def cmd_condition(inputs, out_dir: Path, outputs: PartialOutputs) -> list[Path]:
    """Band-pass every channel of each EDF and write the conditioned cache."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for rec_id, path in discover_recordings(inputs).items():
        if path.suffix.lower() != EDF_SUFFIX:
            continue
        logger.info(f"Conditioning: {path.name}")
        rec = condition_recording(load_recording(path))
        target = outputs.add(out_dir / f"{rec_id}{CONDITIONED_SUFFIX}")
        written.append(save_conditioned(rec, target))
        logger.info(f"  Output: {target.name}")
    if not written:
        raise FileNotFoundError(f"No EDF recordings in {', '.join(map(str, inputs))}")
    return written


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------
def train_config(settings: Settings) -> TrainConfig:
    return TrainConfig(
        arch=settings.arch,
        weighting=settings.weighting,
        batch_size=settings.batch_size,
        iterations=settings.iterations,
        seed=settings.seed,
        batches_per_iteration=settings.batches_per_iteration,
        embedding=settings.embedding,
    )


def final_checkpoint_path(settings: Settings) -> Path:
    return settings.checkpoint or settings.checkpoints_dir / f"{settings.arch}{CHECKPOINT_SUFFIX}"


def cmd_train(settings: Settings, outputs: PartialOutputs) -> Path:
    """Split, train, write a checkpoint per iteration plus the history and split files."""
    spec = build_architecture(settings.arch, embedding=settings.embedding)
    cfg = train_config(settings).resolve(spec)
    corpus = load_corpus(settings.data_dir)
    plan = split_by_patient(corpus.ids, seed=settings.seed)
    logger.info(f"Split: {len(plan.train_ids)} train, {len(plan.val_ids)} validation, {len(plan.test_ids)} test")

    settings.output_dir.mkdir(parents=True, exist_ok=True)
    settings.checkpoints_dir.mkdir(parents=True, exist_ok=True)
    for iteration in range(1, cfg.iterations + 1):
        outputs.add(settings.checkpoints_dir / f"{spec.arch_id}_iter{iteration}{CHECKPOINT_SUFFIX}")

    _, history = train(spec, corpus, plan, cfg, settings.checkpoints_dir)

    final = outputs.add(final_checkpoint_path(settings))
    final.parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(history.checkpoints[-1], final)
    logger.info(f"Checkpoint: {final}")

    history_path = outputs.add(settings.output_dir / f"{spec.arch_id}.history.csv")
    write_history(history, history_path)
    split_path = outputs.add(settings.output_dir / f"{spec.arch_id}.split.csv")
    lines = ["# id,split"] + [
        f"{rec_id},{name}"
        for name, ids in (("train", plan.train_ids), ("validation", plan.val_ids), ("test", plan.test_ids))
        for rec_id in ids
    ]
    split_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"History: {history_path.name}")
    return final


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------
def cmd_predict(checkpoint: Path, inputs, out_dir: Path, outputs: PartialOutputs,
                naive: bool = False, coarsen_samples: int = 100, network=None) -> list[Path]:
    """Per-sample track, 0.5-s coarsened track and episode list for each recording."""
    if network is None:
        network = load_checkpoint(checkpoint)
        logger.info(f"Loaded {network.spec.arch_id} from {checkpoint.name}")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for rec_id, path in discover_recordings(inputs).items():
        logger.info(f"Predicting: {path.name}")
        rec = load_conditioned(path)
        track = predict(network, rec, naive=naive)
        coarse = coarsen_majority(track, coarsen_samples)
        labels = apply_duration_criteria(coarse.labels, rec.rate_hz)
        episodes = episodes_from_labels(labels, rec.rate_hz)

        written.append(write_prediction(track, outputs.add(out_dir / f"{rec_id}{PREDICTION_SUFFIX}")))
        written.append(write_prediction(coarse, outputs.add(out_dir / f"{rec_id}{COARSE_SUFFIX}"), per_interval=True))
        written.append(write_episodes(episodes, outputs.add(out_dir / f"{rec_id}{EPISODES_SUFFIX}"), track.class_names))
        n_mse = sum(1 for e in episodes if e.label == 1)
        logger.info(f"  {n_mse} MSE episodes, outputs in {out_dir}")
    if not written:
        raise FileNotFoundError(f"No recordings in {', '.join(map(str, inputs))}")
    return written


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------
def cmd_evaluate(pred_dir: Path, label_dir: Path, out: Path, outputs: PartialOutputs,
                 reference_dir: Path | None = None, ids=None, split: str = "validation") -> Path:
    """Concatenated kappa report of every prediction against its scoring."""
    pred_files = sorted(pred_dir.glob(f"*{PREDICTION_SUFFIX}"))
    if ids is not None:
        wanted = set(ids)
        pred_files = [p for p in pred_files if p.name[: -len(PREDICTION_SUFFIX)] in wanted]
    if not pred_files:
        raise FileNotFoundError(f"No prediction files in {pred_dir}")

    pairs, lengths = [], {}
    arch_id, class_names = "", None
    for pred_path in pred_files:
        rec_id = pred_path.name[: -len(PREDICTION_SUFFIX)]
        track = read_prediction(pred_path)
        labels_path = label_dir / f"{rec_id}{LABELS_SUFFIX}"
        if not labels_path.exists():
            raise FileNotFoundError(f"No scoring for {rec_id} in {label_dir}")
        expected = scoring_duration(labels_path)
        if expected is None:
            raise EvaluationError(
                f"{rec_id}: recording length unknown (no duration header and no recording in {label_dir})"
            )
        if expected != len(track):
            raise EvaluationError(f"{rec_id}: prediction has {len(track)} samples, recording {expected}")
        ref = load_labels(labels_path, expected)
        reference = binarize_reference(ref) if len(track.class_names) == 2 else ref.labels
        pairs.append((track.labels, reference))
        lengths[rec_id] = len(track)
        arch_id, class_names = track.arch_id or arch_id, track.class_names
    report = concatenated_report(pairs, class_names)
    rows = [(arch_id or "model", report)]
    logger.info(
        f"Evaluated {len(pairs)} recordings: "
        + ", ".join(f"{k} {v:.3f}" for k, v in report.table3_kappas().items())
    )

    if reference_dir is not None:
        scoring_a, scoring_b = [], []
        for rec_id, n in lengths.items():
            other = reference_dir / f"{rec_id}{LABELS_SUFFIX}"
            if other.exists():
                scoring_a.append(load_labels(label_dir / f"{rec_id}{LABELS_SUFFIX}", n))
                scoring_b.append(load_labels(other, n))
        if not scoring_a:
            raise FileNotFoundError(f"No second scoring in {reference_dir} matches the predictions")
        rows.insert(0, ("experts", inter_rater_report(scoring_a, scoring_b)))
        logger.info(f"Inter-rater agreement over {len(scoring_a)} recordings added")

    if out.is_dir() or not out.suffix:
        out.mkdir(parents=True, exist_ok=True)
        out = out / "report.txt"
    write_report(rows, outputs.add(out), split)
    logger.info(f"Report: {out}")
    return out


# ---------------------------------------------------------------------------
# embed
# ---------------------------------------------------------------------------
def cmd_embed(checkpoint: Path, input_path: Path, out: Path, outputs: PartialOutputs,
              labels_path: Path | None = None, perplexity: float = 30.0,
              iterations: int = 1000, stride: int = 100, seed: int = 0) -> Path:
    """64-d embeddings of every stride-th sample, projected to 2-D with t-SNE."""
    network = load_checkpoint(checkpoint)
    rec = load_conditioned(input_path)
    rec_id = recording_id(input_path)
    if labels_path is None:
        labels_path = find_labels(input_path.parent, rec_id)
    if labels_path is not None:
        labels = load_labels(labels_path, rec.duration_samples)
    else:
        logger.warning(f"  No scoring for {rec_id}; points are labeled with the network's own prediction")
        labels = predict(network, rec).labels

    features = extract_features(network, rec, labels, stride=stride)
    logger.info(f"Projecting {len(features)} points of {rec_id} (perplexity {perplexity})")
    result = tsne(features.vectors, perplexity=perplexity, iterations=iterations, seed=seed)
    logger.info(f"  KL divergence {result.kl_initial:.4f} -> {result.kl_final:.4f}")

    if out.is_dir() or not out.suffix:
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"{rec_id}{EMBEDDING_SUFFIX}"
    write_embedding(result, features, outputs.add(out))
    logger.info(f"Embedding: {out}")
    return out


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------
def cmd_synth(out_dir: Path, outputs: PartialOutputs, n_recordings: int = 8,
              duration_s: float = 600.0, seed: int = 0) -> list[Path]:
    """Write a synthetic corpus of EDF recordings with scoring files."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for rec, track in generate_corpus(n_recordings, SynthConfig(duration_s=duration_s), seed=seed):
        edf = outputs.add(out_dir / f"{rec.id}{EDF_SUFFIX}")
        edf.write_bytes(write_edf(rec))
        labels = outputs.add(out_dir / f"{rec.id}{LABELS_SUFFIX}")
        labels.write_text(write_labels(track), encoding="utf-8")
        written += [edf, labels]
    logger.info(f"Wrote {n_recordings} synthetic recordings to {out_dir}")
    return written


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------
def cmd_run(settings: Settings, outputs: PartialOutputs) -> None:
    """Execute the configured stages in order on the data folder."""
    logger.info(f"Stages: {', '.join(settings.stages)}")
    data_dir = settings.data_dir
    checkpoint = final_checkpoint_path(settings)
    predictions_dir = settings.output_dir / "predictions"

    if "condition" in settings.stages:
        cmd_condition([data_dir], data_dir, outputs)
    if "train" in settings.stages:
        checkpoint = cmd_train(settings, outputs)

    scored = [i for i in discover_recordings([data_dir]) if find_labels(data_dir, i)]
    plan = split_by_patient(scored, seed=settings.seed)
    held_out = list(plan.val_ids) + list(plan.test_ids)
    held_out_paths = [p for i, p in discover_recordings([data_dir]).items() if i in held_out]

    if "predict" in settings.stages:
        if not held_out_paths:
            raise ValueError("No validation or test recordings to predict")
        cmd_predict(checkpoint, held_out_paths, predictions_dir, outputs,
                    naive=settings.naive, coarsen_samples=settings.coarsen_samples)
    if "evaluate" in settings.stages:
        for split, ids in (("validation", plan.val_ids), ("test", plan.test_ids)):
            if ids:
                cmd_evaluate(predictions_dir, data_dir, settings.output_dir / f"report_{split}.txt",
                             outputs, ids=ids, split=split)
    if "embed" in settings.stages:
        if not settings.embedding:
            logger.warning("Embed stage skipped: the network was not built with --embedding")
        elif plan.val_ids:
            target = discover_recordings([data_dir])[plan.val_ids[0]]
            cmd_embed(checkpoint, target, settings.output_dir, outputs,
                      perplexity=settings.perplexity, iterations=settings.tsne_iterations,
                      stride=settings.embed_stride, seed=settings.seed)
    logger.info("Run complete.")
