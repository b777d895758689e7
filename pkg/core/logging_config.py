"""
Logging Setup

Routes library logging through Rich on stderr, plus an optional log file.
"""

import logging
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler

from core.settings import Settings


def configure_logging(settings: Settings) -> None:
    """
    Install handlers on the root logger according to settings.logging.

    Args:
        settings: Loaded settings
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    level = getattr(logging, settings.logging.level.upper(), logging.INFO)
    root.setLevel(level)

    rich_handler = RichHandler(
        console=Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
    )
    rich_handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    root.addHandler(rich_handler)

    if settings.logging.file:
        log_path = Path(settings.logging.file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path, encoding="utf-8")
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
        root.addHandler(file_handler)
