"""
Shared logging utility for odediscover modules.

Usage:
    from odediscover.run_logger import RunLogger
    logger = RunLogger("denoise")
    logger.info("IterPSDN started", data={"alpha": 0.1})
    logger.error("Replication failed", exc_info=True)

Each component writes JSON lines to <log dir>/<component>.log. The log
directory is $ODEDISCOVER_LOG_DIR, defaulting to ~/.odediscover/logs.
"""

import json
import logging
import os
import traceback
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, Optional

LOG_DIR_ENV = "ODEDISCOVER_LOG_DIR"
DEFAULT_LOG_DIR = "~/.odediscover/logs"

# Max log file size (1MB)
MAX_LOG_SIZE = 1_000_000

# Max log files to keep per component
MAX_LOG_FILES = 3


def log_dir() -> Path:
    return Path(os.path.expanduser(os.environ.get(LOG_DIR_ENV, DEFAULT_LOG_DIR)))


class JsonLineFormatter(logging.Formatter):
    """Render a record as one JSON object per line."""

    def format(self, record: logging.LogRecord) -> str:
        entry: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "component": record.name.split(".")[-1],
            "message": record.getMessage(),
        }
        data = getattr(record, "data", None)
        if data:
            entry["data"] = data
        trace = getattr(record, "trace", None)
        if trace:
            entry["traceback"] = trace
        return json.dumps(entry, default=_json_default)


def _json_default(value: Any):
    # numpy scalars and arrays
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)


class RunLogger:
    def __init__(self, component: str):
        self.component = component
        self._logger = logging.getLogger(f"odediscover.{component}")
        self._logger.setLevel(logging.DEBUG)
        self._logger.propagate = False
        if not self._logger.handlers:
            self._logger.addHandler(self._make_handler())

    def _make_handler(self) -> logging.Handler:
        """File handler with rotation; a null handler if the directory is unusable."""
        try:
            directory = log_dir()
            directory.mkdir(parents=True, exist_ok=True)
            handler: logging.Handler = RotatingFileHandler(
                directory / f"{self.component}.log",
                maxBytes=MAX_LOG_SIZE,
                backupCount=MAX_LOG_FILES - 1,
                delay=True,
            )
            handler.setFormatter(JsonLineFormatter())
        except OSError:
            handler = logging.NullHandler()
        return handler

    def _write(self, level: int, message: str, data: Optional[Dict[str, Any]] = None,
               exc_info: bool = False):
        extra = {"data": data, "trace": traceback.format_exc() if exc_info else None}
        self._logger.log(level, message, extra=extra)

    def debug(self, message: str, **kwargs):
        self._write(logging.DEBUG, message, **kwargs)

    def info(self, message: str, **kwargs):
        self._write(logging.INFO, message, **kwargs)

    def warning(self, message: str, **kwargs):
        self._write(logging.WARNING, message, **kwargs)

    def error(self, message: str, **kwargs):
        self._write(logging.ERROR, message, **kwargs)

    def log_config(self, config: Dict[str, Any]):
        """Log a resolved run configuration."""
        self.debug("Run configuration resolved", data=config)
