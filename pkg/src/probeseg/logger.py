"""
Logging configuration for probeseg
"""

import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(level: str = "INFO", verbose: bool = False) -> None:
    """
    Configure console logging for the application

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        verbose: Enable verbose logging (DEBUG level)
    """
    if verbose:
        level = "DEBUG"

    numeric_level = getattr(logging, level.upper(), logging.INFO)

    # console level is enforced by the handler; run_log may lower package logger levels
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(numeric_level)
    logging.basicConfig(
        level=numeric_level,
        format=LOG_FORMAT,
        datefmt=DATE_FORMAT,
        handlers=[console],
    )

    # Plotting and raster libraries are chatty at DEBUG
    for name in ("matplotlib", "PIL"):
        logging.getLogger(name).setLevel(logging.WARNING)


@contextmanager
def run_log(path: Path, level: int = logging.INFO) -> Iterator[logging.Handler]:
    """
    Mirror the package's log records into ``path`` for the duration of a run.

    The file receives ``level`` and above even when the console is quieter.
    """
    package = logging.getLogger("probeseg")
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, DATE_FORMAT))

    previous = package.level
    if package.getEffectiveLevel() > level:
        package.setLevel(level)
    package.addHandler(handler)
    try:
        yield handler
    finally:
        package.removeHandler(handler)
        package.setLevel(previous)
        handler.close()
