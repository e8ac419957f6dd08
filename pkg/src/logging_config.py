#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Centralized logging configuration with rotating file handlers.

Log files (under ``LOG_DIR``, default ``<project>/logs``):

- ``app.log``        everything the CLI and library modules emit
- ``error.log``      ERROR and CRITICAL records only
- ``simulation.log`` replication progress of simulation experiments

Library modules only ever call ``logging.getLogger(__name__)``; handlers are
configured once, by ``run_cli`` in ``main.py``.
"""

import logging
import os
import platform
import sys
import time
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import List, Optional


# --------------------------------------------------------------------------- #
#  Configuration Constants
# --------------------------------------------------------------------------- #
LOG_DIR = Path(os.getenv("LOG_DIR") or Path(__file__).parent.parent / "logs")
LOG_DIR.mkdir(parents=True, exist_ok=True)

APP_LOG_FILE = LOG_DIR / "app.log"
ERROR_LOG_FILE = LOG_DIR / "error.log"
SIMULATION_LOG_FILE = LOG_DIR / "simulation.log"

MAX_BYTES = 10 * 1024 * 1024  # 10 MB per file
BACKUP_COUNT = 5

DETAILED_FORMAT = (
    "%(asctime)s | %(levelname)-8s | %(name)-30s | "
    "%(filename)s:%(lineno)-4d | %(funcName)-25s | %(message)s"
)

SIMPLE_FORMAT = "%(asctime)s | %(levelname)-8s | %(message)s"

DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Noisy third-party loggers and the level they are capped at
_QUIET_LOGGERS = {
    "urllib3": logging.WARNING,
    "requests": logging.WARNING,
}


# --------------------------------------------------------------------------- #
#  Handler factories
# --------------------------------------------------------------------------- #
def _formatter(detailed: bool) -> logging.Formatter:
    return logging.Formatter(DETAILED_FORMAT if detailed else SIMPLE_FORMAT, datefmt=DATE_FORMAT)


def create_rotating_handler(
    filepath: Path,
    level: int = logging.DEBUG,
    max_bytes: int = MAX_BYTES,
    backup_count: int = BACKUP_COUNT,
    detailed: bool = True,
) -> RotatingFileHandler:
    """
    Create a rotating file handler.

    Parameters
    ----------
    filepath : Path
        Path to the log file
    level : int
        Minimum level written to the file
    max_bytes : int
        Size at which the file is rotated (default: 10MB)
    backup_count : int
        Number of rotated files kept (default: 5)
    detailed : bool
        Use the detailed format (file:line, function) when True

    Returns
    -------
    RotatingFileHandler
    """
    handler = RotatingFileHandler(
        filepath,
        maxBytes=max_bytes,
        backupCount=backup_count,
        encoding="utf-8",
    )
    handler.setLevel(level)
    handler.setFormatter(_formatter(detailed))
    return handler


def create_console_handler(level: int = logging.INFO, detailed: bool = False) -> logging.StreamHandler:
    """
    Create a console handler.

    The handler writes to stderr so that stdout stays reserved for the JSON
    payloads printed by the CLI.
    """
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(level)
    handler.setFormatter(_formatter(detailed))
    return handler


def _standard_handlers(console_level: int, file_level: int) -> List[logging.Handler]:
    return [
        create_rotating_handler(APP_LOG_FILE, level=file_level),
        create_console_handler(level=console_level),
        create_rotating_handler(ERROR_LOG_FILE, level=logging.ERROR),
    ]


def configure_root_logger(console_level: int = logging.WARNING, file_level: int = logging.INFO) -> None:
    """
    Configure the root logger; every module logger propagates into it.

    Parameters
    ----------
    console_level : int
        Level for console output (default: WARNING)
    file_level : int
        Level for ``app.log`` (default: INFO)
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)
    root_logger.handlers = []
    for handler in _standard_handlers(console_level, file_level):
        root_logger.addHandler(handler)

    for name, level in _QUIET_LOGGERS.items():
        logging.getLogger(name).setLevel(level)


def get_simulation_logger(name: str = "simulation") -> logging.Logger:
    """
    Get the logger used for replication progress.

    Records go to ``simulation.log`` and, through propagation, to whatever the
    root logger is configured with.
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    if not any(
        isinstance(h, RotatingFileHandler) and Path(h.baseFilename) == SIMULATION_LOG_FILE.absolute()
        for h in logger.handlers
    ):
        logger.addHandler(create_rotating_handler(SIMULATION_LOG_FILE, level=logging.DEBUG))
    return logger


def log_system_info(logger: logging.Logger) -> None:
    """Log interpreter, platform and numerical-library versions."""
    import numpy
    import scipy

    logger.info("=" * 80)
    logger.info("System Information")
    logger.info("=" * 80)
    logger.info(f"Python version: {sys.version}")
    logger.info(f"Platform: {platform.platform()}")
    logger.info(f"numpy {numpy.__version__}, scipy {scipy.__version__}")
    logger.info(f"Working directory: {Path.cwd()}")
    logger.info(f"Log directory: {LOG_DIR.absolute()}")
    logger.info("=" * 80)


def log_exception(logger: logging.Logger, exc: BaseException, context: str = "") -> None:
    """
    Log an exception with full traceback and context.

    Parameters
    ----------
    logger : Logger
        Logger instance to use
    exc : Exception
        The exception to log
    context : str
        Where the exception occurred
    """
    if context:
        logger.error(f"Exception in {context}: {type(exc).__name__}: {exc}")
    else:
        logger.error(f"Exception: {type(exc).__name__}: {exc}")
    logger.debug("Full traceback:", exc_info=exc)


# --------------------------------------------------------------------------- #
#  Performance Tracking
# --------------------------------------------------------------------------- #
class PerformanceLogger:
    """
    Context manager for logging how long an operation took.

    Usage:
        with PerformanceLogger(logger, "TCL chain"):
            ...
    """

    def __init__(self, logger: logging.Logger, operation: str, level: int = logging.INFO):
        self.logger = logger
        self.operation = operation
        self.level = level
        self.start_time: Optional[float] = None
        self.duration: Optional[float] = None

    def __enter__(self):
        self.start_time = time.perf_counter()
        self.logger.debug(f"Starting: {self.operation}")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration = time.perf_counter() - self.start_time
        if exc_type is None:
            self.logger.log(self.level, f"Completed: {self.operation} in {self.duration:.2f}s")
        else:
            self.logger.error(
                f"Failed: {self.operation} after {self.duration:.2f}s - "
                f"{exc_type.__name__}: {exc_val}"
            )
        return False
