"""Settings management: config file loading and CLI/config/default merging."""

import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .config import ARCHITECTURE_IDS, COARSEN_SAMPLES, EMBED_STRIDE, SETTINGS_FILENAME, STAGES
from .config import TSNE_ITERATIONS, TSNE_PERPLEXITY

logger = logging.getLogger("microsleep")

WEIGHTINGS = ("inverse", "uniform")

# Default settings.conf content (all values commented out)
SETTINGS_TEMPLATE = """\
# Microsleep settings
# Uncomment and change values as needed. CLI flags override these settings.

[paths]
# data_dir = data
# output_dir = output
# checkpoints_dir = checkpoints
# watch_dir = watch

[train]
# arch = 16s              # 2s, 4s, 8s, 16s, 32s, 16s_u, 16s_1c, cnn_lstm
# weighting = inverse     # inverse or uniform (16s_u defaults to uniform)
# seed = 0
# batch_size = 200        # 128 for cnn_lstm
# iterations = 3          # 8 for cnn_lstm
# batches_per_iteration = # empty = full coverage
# embedding = false

[predict]
# checkpoint =
# coarsen_samples = 100
# naive = false

[embed]
# perplexity = 30
# iterations = 1000
# stride = 100

[run]
# stages = condition, train, predict, evaluate, embed
"""


class SettingsError(ValueError):
    """Invalid configuration value."""


@dataclass
class Settings:
    """Resolved settings for a microsleep run."""
    base_dir: Path = field(default=None)
    data_dir: Path = field(default=None)
    output_dir: Path = field(default=None)
    checkpoints_dir: Path = field(default=None)
    watch_dir: Path = field(default=None)
    arch: str = "16s"
    weighting: str = None             # None = the architecture's own default
    seed: int = 0
    batch_size: int = None            # None = family default
    iterations: int = None            # None = family default
    batches_per_iteration: int = None
    embedding: bool = False
    checkpoint: Path = None
    coarsen_samples: int = COARSEN_SAMPLES
    naive: bool = False
    perplexity: float = TSNE_PERPLEXITY
    tsne_iterations: int = TSNE_ITERATIONS
    embed_stride: int = EMBED_STRIDE
    stages: tuple = STAGES

    @classmethod
    def defaults(cls) -> "Settings":
        """Return a Settings instance with all hardcoded defaults."""
        return cls()


# (section, option, settings key, parser getter)
_OPTIONS = (
    ("paths", "data_dir", "data_dir", "get"),
    ("paths", "output_dir", "output_dir", "get"),
    ("paths", "checkpoints_dir", "checkpoints_dir", "get"),
    ("paths", "watch_dir", "watch_dir", "get"),
    ("train", "arch", "arch", "get"),
    ("train", "weighting", "weighting", "get"),
    ("train", "seed", "seed", "getint"),
    ("train", "batch_size", "batch_size", "getint"),
    ("train", "iterations", "iterations", "getint"),
    ("train", "batches_per_iteration", "batches_per_iteration", "getint"),
    ("train", "embedding", "embedding", "getboolean"),
    ("predict", "checkpoint", "checkpoint", "get"),
    ("predict", "coarsen_samples", "coarsen_samples", "getint"),
    ("predict", "naive", "naive", "getboolean"),
    ("embed", "perplexity", "perplexity", "getfloat"),
    ("embed", "iterations", "tsne_iterations", "getint"),
    ("embed", "stride", "embed_stride", "getint"),
    ("run", "stages", "stages", "get"),
)


def load_config_file(config_path: Path) -> dict:
    """Load a settings file. Returns a flat dict of found values."""
    if not config_path.exists():
        return {}

    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read(str(config_path), encoding="utf-8")
    except configparser.Error as e:
        raise SettingsError(f"Cannot parse {config_path}: {e}") from None

    values = {}
    for section, option, key, getter in _OPTIONS:
        if not parser.has_option(section, option):
            continue
        if parser.get(section, option).strip() == "":
            continue
        try:
            value = getattr(parser, getter)(section, option)
        except ValueError:
            raise SettingsError(
                f"{config_path.name}: [{section}] {option} = {parser.get(section, option)!r} is not valid"
            ) from None
        values[key] = value.strip() if isinstance(value, str) else value
    return values


def parse_stages(value) -> tuple:
    if isinstance(value, str):
        value = [s.strip() for s in value.split(",") if s.strip()]
    unknown = [s for s in value if s not in STAGES]
    if unknown:
        raise SettingsError(f"Unknown stage(s) {', '.join(unknown)} (expected {', '.join(STAGES)})")
    # execution order is fixed
    return tuple(s for s in STAGES if s in value)


def resolve_settings(
    base_dir: Path,
    config_path: Path = None,
    cli_arch: str = None,
    cli_weighting: str = None,
    cli_seed: int = None,
    cli_out: str = None,
    cli_data: str = None,
    cli_batch_size: int = None,
    cli_iterations: int = None,
    cli_batches_per_iteration: int = None,
    cli_embedding: bool = False,
    cli_checkpoint: str = None,
    cli_naive: bool = False,
    cli_perplexity: float = None,
    cli_tsne_iterations: int = None,
    cli_stride: int = None,
    cli_stages: str = None,
) -> Settings:
    """
    Three-tier merge: CLI flags > settings file > hardcoded defaults.

    None on the CLI side means "not specified".
    """
    defaults = Settings.defaults()
    conf = load_config_file(config_path or base_dir / SETTINGS_FILENAME)

    def pick(key, cli_value):
        if cli_value is not None:
            return cli_value
        return conf.get(key, getattr(defaults, key))

    # --- paths ---
    data_dir = Path(cli_data) if cli_data else base_dir / conf.get("data_dir", "data")
    output_dir = Path(cli_out) if cli_out else base_dir / conf.get("output_dir", "output")
    checkpoints_dir = base_dir / conf.get("checkpoints_dir", "checkpoints")
    watch_dir = base_dir / conf.get("watch_dir", "watch")

    # --- train ---
    arch = pick("arch", cli_arch)
    if arch not in ARCHITECTURE_IDS:
        raise SettingsError(f"Unknown architecture {arch!r} (expected one of {', '.join(ARCHITECTURE_IDS)})")
    weighting = pick("weighting", cli_weighting)
    if weighting is not None and weighting not in WEIGHTINGS:
        raise SettingsError(f"Unknown weighting {weighting!r} (expected {' or '.join(WEIGHTINGS)})")
    embedding = cli_embedding or conf.get("embedding", defaults.embedding)

    # --- predict ---
    checkpoint = pick("checkpoint", cli_checkpoint)
    checkpoint = Path(checkpoint) if checkpoint else None
    naive = cli_naive or conf.get("naive", defaults.naive)

    settings = Settings(
        base_dir=base_dir,
        data_dir=data_dir,
        output_dir=output_dir,
        checkpoints_dir=checkpoints_dir,
        watch_dir=watch_dir,
        arch=arch,
        weighting=weighting,
        seed=pick("seed", cli_seed),
        batch_size=pick("batch_size", cli_batch_size),
        iterations=pick("iterations", cli_iterations),
        batches_per_iteration=pick("batches_per_iteration", cli_batches_per_iteration),
        embedding=embedding,
        checkpoint=checkpoint,
        coarsen_samples=pick("coarsen_samples", None),
        naive=naive,
        perplexity=pick("perplexity", cli_perplexity),
        tsne_iterations=pick("tsne_iterations", cli_tsne_iterations),
        embed_stride=pick("embed_stride", cli_stride),
        stages=parse_stages(pick("stages", cli_stages)),
    )
    for name in ("batch_size", "iterations", "batches_per_iteration", "coarsen_samples",
                 "tsne_iterations", "embed_stride"):
        value = getattr(settings, name)
        if value is not None and value < 1:
            raise SettingsError(f"{name} must be positive, got {value}")
    return settings


def seed_settings_file(base_dir: Path) -> None:
    """Create settings.conf with commented-out defaults if it doesn't exist."""
    config_path = base_dir / SETTINGS_FILENAME
    if not config_path.exists():
        config_path.write_text(SETTINGS_TEMPLATE, encoding="utf-8")
        logger.info(f"Created default settings file: {config_path}")
