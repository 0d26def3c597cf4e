"""Logging setup: one rich handler on stderr."""

import logging

from rich.console import Console
from rich.logging import RichHandler

from src.config import log_level_from_env

stderr_console = Console(stderr=True)


def setup_logging(level: str | None = None) -> int:
    """Configure the root logger; level defaults to SDTRANSIT_LOG.

    Returns:
        The numeric level in effect.
    """
    name = (level or log_level_from_env()).upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        numeric = logging.WARNING
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    root.addHandler(RichHandler(console=stderr_console, show_path=False, rich_tracebacks=True))
    root.setLevel(numeric)
    return numeric
