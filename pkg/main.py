#!/usr/bin/env python3
"""
Microsleep: find microsleep episodes in EEG/EOG recordings.

Usage:
    python main.py synth                     Write a synthetic scored corpus into the data folder
    python main.py condition FILE...         Band-pass EDF recordings into the conditioned cache
    python main.py train --arch 16s          Train a network on the scored recordings
    python main.py predict FILE...           Per-sample, coarse and episode files for recordings
    python main.py evaluate PRED_DIR LABELS  Per-class kappa report
    python main.py embed FILE                t-SNE projection of the 64-d embeddings
    python main.py run                       Run the configured stages on the data folder
    python main.py watch                     Predict every recording dropped into the watch folder

Set MICROSLEEP_DIR env var to change the base folder (default: ~/Microsleep).
"""

import argparse
import logging
import sys
from pathlib import Path

from microsleep.config import ARCHITECTURE_IDS, STAGES


def setup_logging(verbose: bool = False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s  %(message)s",
        datefmt="%H:%M:%S",
        handlers=[logging.StreamHandler(sys.stdout)],
        force=True,
    )


def ensure_dirs():
    import microsleep.config as cfg

    for d in cfg.ALL_DIRS:
        d.mkdir(parents=True, exist_ok=True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed (default: 0)")
    common.add_argument(
        "--arch",
        choices=ARCHITECTURE_IDS,
        default=None,
        help="Architecture id (default: 16s)",
    )
    common.add_argument("--out", metavar="PATH", default=None, help="Output folder or file")
    common.add_argument("--config", metavar="FILE", default=None, help="Settings file (default: BASE/settings.conf)")
    common.add_argument("--dir", metavar="PATH", help="Override the base directory (default: ~/Microsleep)")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(description="Microsleep: segment microsleep episodes in EEG/EOG")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("condition", parents=[common], help="Band-pass EDF recordings")
    p.add_argument("inputs", nargs="+", metavar="FILE", help="EDF files or folders")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--data", metavar="PATH", default=None, help="Folder of recordings and scorings")
    training.add_argument("--weighting", choices=("inverse", "uniform"), default=None, help="Class weighting")
    training.add_argument("--batch-size", type=int, default=None, help="Windows per batch")
    training.add_argument("--iterations", type=int, default=None, help="Training iterations")
    training.add_argument(
        "--batches-per-iteration",
        type=int,
        default=None,
        help="Cap batches per iteration (default: full coverage)",
    )
    training.add_argument("--embedding", action="store_true", help="Add the 64-filter embedding block")
    training.add_argument("--checkpoint", metavar="FILE", default=None, help="Final checkpoint path")

    sub.add_parser("train", parents=[common, training], help="Train a network")

    p = sub.add_parser("predict", parents=[common], help="Segment recordings")
    p.add_argument("inputs", nargs="+", metavar="FILE", help="EDF or conditioned files, or folders")
    p.add_argument("--checkpoint", metavar="FILE", default=None, help="Checkpoint (default: checkpoints/ARCH.ckpt)")
    p.add_argument("--naive", action="store_true", help="Evaluate every window separately (slow oracle)")

    p = sub.add_parser("evaluate", parents=[common], help="Per-class kappa report")
    p.add_argument("pred_dir", metavar="PRED_DIR", help="Folder of .pred.csv files")
    p.add_argument("label_dir", metavar="LABEL_DIR", help="Folder of reference .labels.csv files")
    p.add_argument("--reference-dir", metavar="PATH", default=None, help="Second scorer's label folder")
    p.add_argument("--split", choices=("validation", "test"), default="validation", help="Published row to print")

    p = sub.add_parser("embed", parents=[common], help="t-SNE of the embedding features")
    p.add_argument("input", metavar="FILE", help="EDF or conditioned recording")
    p.add_argument("--checkpoint", metavar="FILE", default=None, help="Checkpoint of an --embedding network")
    p.add_argument("--labels", metavar="FILE", default=None, help="Scoring used to color the points")
    p.add_argument("--perplexity", type=float, default=None, help="t-SNE perplexity (default: 30)")
    p.add_argument("--tsne-iterations", type=int, default=None, help="t-SNE iterations (default: 1000)")
    p.add_argument("--stride", type=int, default=None, help="Keep every STRIDE-th sample (default: 100)")

    p = sub.add_parser("synth", parents=[common], help="Write a synthetic corpus")
    p.add_argument("--count", type=int, default=8, help="Number of recordings (default: 8)")
    p.add_argument("--duration", type=float, default=600.0, help="Seconds per recording (default: 600)")

    p = sub.add_parser("run", parents=[common, training], help="Run the configured stages")
    p.add_argument("--stages", default=None, help=f"Comma-separated subset of {','.join(STAGES)}")
    p.add_argument("--naive", action="store_true", help="Use the naive predictor")

    p = sub.add_parser("watch", parents=[common], help="Watch a folder for new recordings")
    p.add_argument("--checkpoint", metavar="FILE", default=None, help="Checkpoint (default: checkpoints/ARCH.ckpt)")
    return parser


def main():
    args = build_parser().parse_args()

    setup_logging(args.verbose)
    logger = logging.getLogger("microsleep")

    import microsleep.config as cfg

    # Override base dir if requested
    if args.dir:
        cfg.BASE_DIR = Path(args.dir)
        cfg.DATA_DIR = cfg.BASE_DIR / "data"
        cfg.OUTPUT_DIR = cfg.BASE_DIR / "output"
        cfg.CHECKPOINTS_DIR = cfg.BASE_DIR / "checkpoints"
        cfg.WATCH_DIR = cfg.BASE_DIR / "watch"
        cfg.LOGS_DIR = cfg.BASE_DIR / "logs"
        cfg.ALL_DIRS = [cfg.DATA_DIR, cfg.OUTPUT_DIR, cfg.CHECKPOINTS_DIR, cfg.WATCH_DIR, cfg.LOGS_DIR]

    ensure_dirs()

    # Resolve settings: CLI flags > settings.conf > hardcoded defaults
    from microsleep import commands
    from microsleep.settings import resolve_settings, seed_settings_file

    base_dir = cfg.BASE_DIR
    seed_settings_file(base_dir)

    outputs = commands.PartialOutputs()
    try:
        settings = resolve_settings(
            base_dir=base_dir,
            config_path=Path(args.config) if args.config else None,
            cli_arch=args.arch,
            cli_weighting=getattr(args, "weighting", None),
            cli_seed=args.seed,
            cli_out=args.out if args.command in ("train", "run", "predict", "watch") else None,
            cli_data=getattr(args, "data", None),
            cli_batch_size=getattr(args, "batch_size", None),
            cli_iterations=getattr(args, "iterations", None),
            cli_batches_per_iteration=getattr(args, "batches_per_iteration", None),
            cli_embedding=getattr(args, "embedding", False),
            cli_checkpoint=getattr(args, "checkpoint", None),
            cli_naive=getattr(args, "naive", False),
            cli_perplexity=getattr(args, "perplexity", None),
            cli_tsne_iterations=getattr(args, "tsne_iterations", None),
            cli_stride=getattr(args, "stride", None),
            cli_stages=getattr(args, "stages", None),
        )
        out = Path(args.out) if args.out else None

        if args.command == "condition":
            commands.cmd_condition([Path(p) for p in args.inputs], out or settings.data_dir, outputs)
        elif args.command == "train":
            commands.cmd_train(settings, outputs)
        elif args.command == "predict":
            commands.cmd_predict(
                commands.final_checkpoint_path(settings),
                [Path(p) for p in args.inputs],
                settings.output_dir,
                outputs,
                naive=settings.naive,
                coarsen_samples=settings.coarsen_samples,
            )
        elif args.command == "evaluate":
            commands.cmd_evaluate(
                Path(args.pred_dir),
                Path(args.label_dir),
                out or settings.output_dir,
                outputs,
                reference_dir=Path(args.reference_dir) if args.reference_dir else None,
                split=args.split,
            )
        elif args.command == "embed":
            commands.cmd_embed(
                commands.final_checkpoint_path(settings),
                Path(args.input),
                out or settings.output_dir,
                outputs,
                labels_path=Path(args.labels) if args.labels else None,
                perplexity=settings.perplexity,
                iterations=settings.tsne_iterations,
                stride=settings.embed_stride,
                seed=settings.seed,
            )
        elif args.command == "synth":
            commands.cmd_synth(
                out or settings.data_dir,
                outputs,
                n_recordings=args.count,
                duration_s=args.duration,
                seed=settings.seed,
            )
        elif args.command == "run":
            commands.cmd_run(settings, outputs)
        elif args.command == "watch":
            from microsleep.watcher import watch

            logger.info("=" * 50)
            logger.info("Microsleep")
            logger.info("=" * 50)
            logger.info(f"Watch:      {settings.watch_dir}")
            logger.info(f"Output:     {settings.output_dir}")
            logger.info(f"Checkpoint: {commands.final_checkpoint_path(settings)}")
            logger.info("")
            watch(settings.watch_dir, settings)
    except (ValueError, OSError, KeyError) as e:
        logger.error(f"Error: {e}")
        outputs.remove()
        sys.exit(1)


if __name__ == "__main__":
    main()
