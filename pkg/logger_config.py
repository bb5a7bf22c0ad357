"""
Logging Configuration Module
============================

Logging for the DART2 toolkit. A run writes a rotating DEBUG log file under
the log directory and echoes records at the chosen level to the console.
File records carry the thread name, because simulation repetitions run on
worker threads and their messages interleave.

LogContext times a block of work; log_function_call traces the heavier
numerical entry points (tree construction, the full procedure, replication
runs) with a compact summary of their array arguments.

Author: DART2 Toolkit
Date: 2026-10-17
Version: 1.0.0
"""

import functools
import logging
import logging.handlers
import time
from datetime import datetime
from pathlib import Path
from typing import List

import numpy as np


FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - [%(threadName)s] %(funcName)s:%(lineno)d - %(message)s"
CONSOLE_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
MAX_LOG_BYTES = 10 * 1024 * 1024
LOG_BACKUPS = 5

# handlers added by setup_logging, replaced on the next call
_installed: List[logging.Handler] = []


def _remove_installed(root_logger: logging.Logger) -> None:
    while _installed:
        handler = _installed.pop()
        root_logger.removeHandler(handler)
        handler.close()


def setup_logging(log_level=logging.INFO, log_dir="logs", run_name="dart2"):
    """
    Configure console and file logging for one run.

    A second call replaces the handlers of the first. Handlers that other
    code attached to the root logger are left in place. If the log directory
    cannot be created the run continues with console logging only.

    Args:
        log_level (int): Console level; the file always records DEBUG
        log_dir (str): Directory for log files, created when missing
        run_name (str): Log file prefix, e.g. "dart2_simulate"

    Returns:
        logging.Logger: The root logger
    """
    root_logger = logging.getLogger()
    _remove_installed(root_logger)
    root_logger.setLevel(min(log_level, logging.DEBUG))

    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt="%H:%M:%S"))
    root_logger.addHandler(console_handler)
    _installed.append(console_handler)

    log_file = Path(log_dir) / f"{run_name}_{datetime.now():%Y%m%d_%H%M%S}.log"
    try:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            log_file, maxBytes=MAX_LOG_BYTES, backupCount=LOG_BACKUPS, encoding="utf-8"
        )
    except OSError as e:
        root_logger.error(f"Cannot write log file {log_file}: {e}; logging to the console only")
        return root_logger

    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
    root_logger.addHandler(file_handler)
    _installed.append(file_handler)

    root_logger.info("=" * 80)
    root_logger.info(f"DART2 Multiple Testing Toolkit - {run_name}")
    root_logger.info(f"Log file: {log_file}")
    root_logger.info("=" * 80)
    return root_logger


class LogContext:
    """
    Time a block of work and log its start, end and duration.

    A failure is logged at ERROR with the exception type and message and is
    re-raised. The duration in seconds is kept in `elapsed` after the block.

    Example:
        with LogContext("Screening layer 3", logger, level=logging.DEBUG):
            ...
    """

    def __init__(self, operation_name, logger=None, level=logging.INFO):
        self.operation_name = operation_name
        self.logger = logger or logging.getLogger()
        self.level = level
        self.elapsed = None
        self._start = None

    def __enter__(self):
        self._start = time.perf_counter()
        self.logger.log(self.level, f"Starting: {self.operation_name}")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.elapsed = time.perf_counter() - self._start
        if exc_type is None:
            self.logger.log(self.level, f"Completed: {self.operation_name} ({self.elapsed:.3f}s)")
        else:
            self.logger.error(
                f"Failed: {self.operation_name} after {self.elapsed:.3f}s - {exc_type.__name__}: {exc_val}"
            )
        return False


def describe_argument(value, width: int = 40) -> str:
    """Short text for a log line: arrays by shape, objects with `m` by size."""
    if isinstance(value, np.ndarray):
        return f"array{value.shape}"
    m = getattr(value, "m", None)
    if isinstance(m, (int, np.integer)):
        return f"{type(value).__name__}(m={int(m)})"
    text = repr(value)
    return text if len(text) <= width else text[:width - 3] + "..."


def log_function_call(func):
    """
    Log a call at DEBUG with its arguments summarised, and its duration.

    Failures are logged at ERROR with the traceback and re-raised.
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        logger = logging.getLogger(func.__module__)
        name = func.__name__
        if logger.isEnabledFor(logging.DEBUG):
            shown = [describe_argument(a) for a in args]
            shown += [f"{k}={describe_argument(v)}" for k, v in kwargs.items()]
            logger.debug(f"Calling {name}({', '.join(shown)})")

        start = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            logger.error(f"{name} failed after {time.perf_counter() - start:.3f}s: {e}", exc_info=True)
            raise
        logger.debug(f"{name} returned in {time.perf_counter() - start:.3f}s")
        return result

    return wrapper
