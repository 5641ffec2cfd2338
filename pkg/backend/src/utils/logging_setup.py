"""Process-wide logging configuration (rich console handler)."""

import logging
import os
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

_configured = False

console = Console(stderr=True)


def configure_logging(level: Optional[str] = None, verbose: bool = False) -> None:
    """Install a RichHandler on the root logger once per process"""
    global _configured

    level_name = (level or os.getenv("RESPSCOPE_LOG_LEVEL", "INFO")).upper()
    if verbose:
        level_name = "DEBUG"

    root = logging.getLogger()
    root.setLevel(level_name)
    if _configured:
        return

    handler = RichHandler(
        console=console,
        show_path=verbose,
        rich_tracebacks=verbose,
        markup=False,
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s", datefmt="[%X]"))
    root.handlers = [handler]
    _configured = True
