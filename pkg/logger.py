"""Centralized logging configuration for MultiWalk"""

import json
import logging
import sys
from collections.abc import MutableMapping
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any

import config

_logger: logging.Logger | None = None
_stderr_handler: logging.Handler | None = None
_file_handler: RotatingFileHandler | None = None

LOG_FORMAT = "[%(asctime)s] %(levelname)s [%(name)s.%(funcName)s:%(lineno)d] %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class StructuredFormatter(logging.Formatter):
    """Appends `extra` fields (solver statistics, pair keys, variant names) as sorted JSON."""

    RESERVED_ATTRS = frozenset(vars(logging.LogRecord("", 0, "", 0, "", None, None))) | {
        "message",
        "asctime",
        "taskName",
    }

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        fields = {k: v for k, v in vars(record).items() if k not in self.RESERVED_ATTRS}
        if not fields:
            return line
        try:
            return f"{line} | {json.dumps(fields, default=str, ensure_ascii=False, sort_keys=True)}"
        except (TypeError, ValueError):
            return line


class RunAdapter(logging.LoggerAdapter):
    """Adds fixed run fields (command, variant) to every record; call-site extras win."""

    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> tuple[Any, MutableMapping[str, Any]]:
        kwargs["extra"] = {**(self.extra or {}), **kwargs.get("extra", {})}
        return msg, kwargs


def _open_log_file(path: Path, formatter: logging.Formatter) -> RotatingFileHandler | None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        handler = RotatingFileHandler(
            path,
            maxBytes=config.LOG_MAX_BYTES,
            backupCount=config.LOG_BACKUP_COUNT,
            encoding="utf-8",
        )
    except OSError as e:
        sys.stderr.write(f"Warning: Could not setup file logging: {e}\n")
        return None
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(formatter)
    return handler


def setup_logger(name: str = "MultiWalk") -> logging.Logger:
    """
    Sets up the run logger: DEBUG to the rotating file in the state
    directory, WARNING and above to stderr.

    Args:
        name: Logger name

    Returns:
        Configured logger instance
    """
    global _logger, _stderr_handler, _file_handler

    if _logger is not None:
        return _logger

    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    logger.propagate = False
    logger.handlers.clear()

    formatter = StructuredFormatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)

    _file_handler = _open_log_file(config.LOG_FILE, formatter)
    if _file_handler is not None:
        logger.addHandler(_file_handler)

    _stderr_handler = logging.StreamHandler(sys.stderr)
    _stderr_handler.setLevel(logging.WARNING)
    _stderr_handler.setFormatter(formatter)
    logger.addHandler(_stderr_handler)

    _logger = logger
    return logger


def get_logger() -> logging.Logger:
    """Gets the configured logger instance, creating it on first use."""
    if _logger is None:
        return setup_logger()
    return _logger


def bind(**fields: Any) -> RunAdapter:
    """Logger that tags every record with `fields`."""
    return RunAdapter(get_logger(), fields)


def move_log_file(path: Path) -> None:
    """Reopens the file handler at `path`; modules keep their logger references."""
    global _file_handler

    logger = get_logger()
    path = Path(path)
    if _file_handler is not None:
        if Path(_file_handler.baseFilename) == path.resolve():
            return
        logger.removeHandler(_file_handler)
        _file_handler.close()
    _file_handler = _open_log_file(path, StructuredFormatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
    if _file_handler is not None:
        logger.addHandler(_file_handler)


def set_stderr_level(level: int) -> None:
    """Adjusts the verbosity of the stderr handler; the file handler keeps DEBUG."""
    get_logger()
    if _stderr_handler is not None:
        _stderr_handler.setLevel(level)
