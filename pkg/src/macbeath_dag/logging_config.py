"""Logging setup for Macbeath DAG builds and queries.

Log output goes to stderr; stdout is reserved for CLI answers. Records emitted
inside ``log_context`` carry build context (for example the DAG level being
packed) and the formatter appends it as ``[key=value]`` tags.
"""

import logging
import os
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Optional

PACKAGE_LOGGER = "macbeath_dag"
CONTEXT_KEYS = ("dag_level",)
DATE_FORMAT = "%H:%M:%S"


class ContextFormatter(logging.Formatter):
    """Formatter that appends known context attributes of a record."""

    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        tags = [f"{key}={getattr(record, key)}" for key in CONTEXT_KEYS if hasattr(record, key)]
        if tags:
            text += " [" + " ".join(tags) + "]"
        return text


def _format_string(include_timestamp: bool, include_module: bool) -> str:
    parts = ["%(asctime)s"] if include_timestamp else []
    parts.append("%(levelname)-7s")
    if include_module:
        parts.append("%(name)s")
    parts.append("%(message)s")
    return " | ".join(parts)


def setup_logging(
    level: str = "INFO",
    format_string: Optional[str] = None,
    log_file: Optional[str] = None,
    include_timestamp: bool = True,
    include_module: bool = True,
) -> None:
    """Route library logs to stderr and optionally a file.

    Args:
        level: DEBUG shows per-candidate packing work, INFO per-level summaries,
            WARNING clamps and fallbacks
        format_string: Replaces the default format
        log_file: Extra destination; parent directories are created
        include_timestamp: Prefix records with the wall-clock time
        include_module: Include the logger name
    """
    numeric_level = getattr(logging, level.upper(), logging.INFO)
    formatter = ContextFormatter(
        format_string or _format_string(include_timestamp, include_module), datefmt=DATE_FORMAT
    )

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(path))

    root = logging.getLogger()
    root.handlers.clear()
    root.setLevel(numeric_level)
    for handler in handlers:
        handler.setLevel(numeric_level)
        handler.setFormatter(formatter)
        root.addHandler(handler)
    logging.getLogger(PACKAGE_LOGGER).setLevel(numeric_level)

    # matplotlib logs font discovery at INFO
    for noisy in ("matplotlib", "PIL"):
        logging.getLogger(noisy).setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Logger under the ``macbeath_dag`` namespace.

    Test imports (``src.macbeath_dag.x``) and installed imports share a logger.
    """
    name = name.removeprefix("src.")
    if name == "__main__":
        name = "main"
    if not name.startswith(PACKAGE_LOGGER):
        name = f"{PACKAGE_LOGGER}.{name}"
    return logging.getLogger(name)


def _env_flag(name: str, default: bool) -> bool:
    value = os.getenv(name)
    return default if value is None else value.strip().lower() in ("1", "true", "yes")


def setup_from_env() -> None:
    """Configure logging from ``MACBEATH_LOG_LEVEL``, ``MACBEATH_LOG_FORMAT``,
    ``MACBEATH_LOG_FILE``, ``MACBEATH_LOG_TIMESTAMP`` and ``MACBEATH_LOG_MODULE``."""
    setup_logging(
        level=os.getenv("MACBEATH_LOG_LEVEL", "INFO"),
        format_string=os.getenv("MACBEATH_LOG_FORMAT"),
        log_file=os.getenv("MACBEATH_LOG_FILE"),
        include_timestamp=_env_flag("MACBEATH_LOG_TIMESTAMP", True),
        include_module=_env_flag("MACBEATH_LOG_MODULE", True),
    )


class ContextFilter(logging.Filter):
    """Attach fixed attributes to every record passing through a logger."""

    def __init__(self, context: dict[str, Any]):
        super().__init__()
        self.context = context

    def filter(self, record: logging.LogRecord) -> bool:
        for key, value in self.context.items():
            setattr(record, key, value)
        return True


@contextmanager
def log_context(logger: logging.Logger, **context: Any) -> Iterator[None]:
    """Tag records of ``logger`` with ``context`` for the duration of the block."""
    context_filter = ContextFilter(context)
    logger.addFilter(context_filter)
    try:
        yield
    finally:
        logger.removeFilter(context_filter)


if "MACBEATH_LOG_LEVEL" in os.environ:
    setup_from_env()
