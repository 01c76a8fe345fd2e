"""
Logger Setup
Loguru sinks for the command-line pipeline and small logging helpers
"""

import functools
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger

import config

# Records starting with this prefix also go to pipeline.log
STAGE_PREFIX = "Stage"

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"


def _is_stage_record(record) -> bool:
    return record["message"].startswith(STAGE_PREFIX)


def _format_details(details: Optional[Dict[str, Any]]) -> str:
    return " | ".join(f"{key}={value}" for key, value in (details or {}).items())


def setup_logging(level: Optional[str] = None, logs_dir: Optional[Path] = None) -> List[int]:
    """
    Install the console and file sinks

    Every existing sink is removed first, so a second call reconfigures
    logging instead of duplicating records.

    Sinks:
    - stderr, colourised, at `level`
    - fissid.log with every DEBUG record, rotated at 10 MB, kept 7 days
    - errors.log with ERROR records and their backtraces
    - pipeline.log with the stage records of the CLI

    Args:
        level: Console level (defaults to FISSID_LOG_LEVEL)
        logs_dir: Directory of the log files (defaults to FISSID_LOGS_DIR)

    Returns:
        Handler ids of the installed sinks
    """
    level = (level or config.LOG_LEVEL).upper()
    logs_dir = Path(logs_dir or config.LOGS_DIR)
    logs_dir.mkdir(parents=True, exist_ok=True)

    logger.remove()
    handlers = [
        logger.add(sys.stderr, format=CONSOLE_FORMAT, level=level, colorize=True),
        logger.add(
            logs_dir / config.LOG_FILE.name,
            format=FILE_FORMAT,
            level="DEBUG",
            rotation="10 MB",
            retention="7 days",
            compression="zip",
            enqueue=True,  # records arrive from worker threads
        ),
        logger.add(
            logs_dir / "errors.log",
            format=FILE_FORMAT + "\n{exception}",
            level="ERROR",
            rotation="5 MB",
            retention="30 days",
            compression="zip",
            backtrace=True,
            diagnose=True,
        ),
        logger.add(
            logs_dir / "pipeline.log",
            format="{time:YYYY-MM-DD HH:mm:ss} | {message}",
            level="INFO",
            rotation="10 MB",
            retention="7 days",
            filter=_is_stage_record,
        ),
    ]

    logger.info("Logging system initialized")
    logger.debug(f"Console level {level}, log directory {logs_dir}")
    return handlers


def log_function_call(func):
    """
    Decorator logging entry, exit and wall time of a call at DEBUG level

    Usage:
        @log_function_call
        def load_nuclear_data(path):
            ...
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        logger.debug(f"Calling {func.__qualname__}")
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            logger.error(f"{func.__qualname__} failed: {e}")
            raise
        logger.debug(f"{func.__qualname__} returned after {time.perf_counter() - start:.3f}s")
        return result
    return wrapper


def log_stage(name: str, **details):
    """
    Log a pipeline stage record

    Args:
        name: Stage name
        **details: Key/value pairs appended to the record
    """
    suffix = _format_details(details)
    logger.info(f"{STAGE_PREFIX} {name}" + (f" | {suffix}" if suffix else ""))


def log_error(error: Exception, context: Optional[Dict[str, Any]] = None):
    """
    Log an error with its context

    The context carried by a FissidError is merged with the one given here;
    entries given here win.

    Args:
        error: Exception object
        context: Additional context dictionary
    """
    logger.error(f"{type(error).__name__}: {error}")
    merged = {**(getattr(error, "context", None) or {}), **(context or {})}
    if merged:
        logger.error(f"Context: {_format_details(merged)}")


def log_performance(operation: str, duration: float, details: Optional[Dict[str, Any]] = None):
    """
    Log the wall time of an operation

    Args:
        operation: Operation name
        duration: Duration in seconds
        details: Additional details
    """
    suffix = _format_details(details)
    logger.info(f"Performance: {operation} took {duration:.3f}s" + (f" | {suffix}" if suffix else ""))


@contextmanager
def timed(operation: str, **details):
    """Log the wall time of a block, also when it raises"""
    start = time.perf_counter()
    try:
        yield
    finally:
        log_performance(operation, time.perf_counter() - start, details)
