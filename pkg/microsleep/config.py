import os
from pathlib import Path

# Base directory, defaults to ~/Microsleep but can be overridden via env var
BASE_DIR = Path(os.environ.get("MICROSLEEP_DIR", Path.home() / "Microsleep"))

DATA_DIR = BASE_DIR / "data"
OUTPUT_DIR = BASE_DIR / "output"
CHECKPOINTS_DIR = BASE_DIR / "checkpoints"
WATCH_DIR = BASE_DIR / "watch"
LOGS_DIR = BASE_DIR / "logs"

ALL_DIRS = [DATA_DIR, OUTPUT_DIR, CHECKPOINTS_DIR, WATCH_DIR, LOGS_DIR]

# Settings file
SETTINGS_FILENAME = "settings.conf"

# File suffixes
EDF_SUFFIX = ".edf"
CONDITIONED_SUFFIX = ".cond"
LABELS_SUFFIX = ".labels.csv"
PREDICTION_SUFFIX = ".pred.csv"
COARSE_SUFFIX = ".coarse.csv"
EPISODES_SUFFIX = ".episodes.csv"
EMBEDDING_SUFFIX = ".embedding.csv"
CHECKPOINT_SUFFIX = ".ckpt"
SUPPORTED_EXTENSIONS = {EDF_SUFFIX, CONDITIONED_SUFFIX}

# Acquisition
SAMPLE_RATE_HZ = 200.0
EEG_CHANNELS = ("O1M2", "O2M1")
EOG_CHANNELS = ("E1M1", "E2M1")
ALL_CHANNELS = EEG_CHANNELS + EOG_CHANNELS
EVAL_EEG_CHANNEL = "O1M2"

# Fourier band-pass edges (Hz), inclusive passband
BAND_LOW_HZ = 0.5
BAND_HIGH_HZ = 45.0

# Scoring classes in code order
CLASS_NAMES = ("W", "MSE", "MSEc", "ED")
BINARY_CLASS_NAMES = ("nonMSE", "MSE")

# Architecture identifiers (window length, weighting, channel variants)
ARCHITECTURE_IDS = ("2s", "4s", "8s", "16s", "32s", "16s_u", "16s_1c", "cnn_lstm")

# Post-processing
COARSEN_SAMPLES = 100
MSE_MIN_SECONDS = 1.0
MSE_MAX_SECONDS = 15.0

# Introspection
EMBED_STRIDE = 100
TSNE_PERPLEXITY = 30.0
TSNE_ITERATIONS = 1000

# Run stages, in execution order
STAGES = ("condition", "train", "predict", "evaluate", "embed")
