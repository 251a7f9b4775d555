"""Watch a folder and segment recordings dropped into it."""

import logging
import time
from pathlib import Path

from watchdog.events import FileSystemEventHandler
from watchdog.observers import Observer

from .checkpoint import load_checkpoint
from .commands import PartialOutputs, cmd_predict, final_checkpoint_path
from .config import SUPPORTED_EXTENSIONS
from .network import Network
from .settings import Settings

logger = logging.getLogger("microsleep")


def process_recording(filepath: Path, settings: Settings = None, network: Network = None) -> bool:
    """Predict one recording into the output folder. Returns True on success."""
    if settings is None:
        settings = Settings.defaults()

    if filepath.suffix.lower() not in SUPPORTED_EXTENSIONS:
        logger.warning(f"Skipping unsupported file: {filepath.name}")
        return False

    outputs = PartialOutputs()
    try:
        cmd_predict(
            final_checkpoint_path(settings),
            [filepath],
            settings.output_dir,
            outputs,
            naive=settings.naive,
            coarsen_samples=settings.coarsen_samples,
            network=network,
        )
        return True
    except Exception as e:
        logger.error(f"  Error processing {filepath.name}: {e}", exc_info=True)
        outputs.remove()
        return False


class NewFileHandler(FileSystemEventHandler):
    def __init__(self, settings: Settings = None, network: Network = None):
        super().__init__()
        self.settings = settings or Settings.defaults()
        self.network = network

    def _handle(self, filepath: Path):
        if filepath.suffix.lower() not in SUPPORTED_EXTENSIONS:
            return
        # Small delay to let file finish writing
        time.sleep(1)
        process_recording(filepath, self.settings, self.network)

    def on_created(self, event):
        if event.is_directory:
            return
        self._handle(Path(event.src_path))

    def on_moved(self, event):
        """Also handle files moved into the folder."""
        if event.is_directory:
            return
        self._handle(Path(event.dest_path))


def watch(watch_dir: Path, settings: Settings = None):
    """Start watching `watch_dir`. Blocks until interrupted."""
    settings = settings or Settings.defaults()
    network = load_checkpoint(final_checkpoint_path(settings))
    handler = NewFileHandler(settings, network)
    observer = Observer()
    observer.schedule(handler, str(watch_dir), recursive=False)
    observer.start()
    logger.info(f"Watching: {watch_dir} with {network.spec.arch_id}")
    logger.info("Drop EDF recordings into the watch folder.")
    logger.info("Press Ctrl+C to stop.\n")

    try:
        while True:
            time.sleep(60)
    except KeyboardInterrupt:
        observer.stop()
        logger.info("\nStopped.")
    observer.join()
