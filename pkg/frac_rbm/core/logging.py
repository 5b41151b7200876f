"""Loguru configuration: console and rotating file sinks, stdlib interception and stage timing."""

import logging
import os
import sys
import time
from contextlib import contextmanager
from typing import Iterator

from loguru import logger

LOG_FILE_NAME = "frac-rbm.log"


class InterceptHandler(logging.Handler):
    """
    Redirects standard logging records (and captured ``warnings``) to Loguru.

    scipy and numpy report solver trouble through ``logging`` and ``warnings``;
    this handler makes those records show up in the same sinks as ours, with
    the caller frame of the original emitter.
    """

    def emit(self, record: logging.LogRecord) -> None:
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = logging.currentframe(), 2
        while frame and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        logger.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())


def log_formatter(record: dict) -> str:
    """
    Console formatter.

    Banners are passed with ``literal=True`` and printed verbatim; INFO lines are
    concise; records bound with a ``stage`` extra are prefixed with it; other
    levels carry the origin of the record.

    Args:
        record: The Loguru log record dictionary.

    Returns:
        The format string for this record.
    """
    if record["extra"].get("literal"):
        return "{message}"

    stage = "<cyan>[{extra[stage]}]</cyan> " if record["extra"].get("stage", "-") != "-" else ""

    if record["level"].name in ("INFO", "SUCCESS"):
        return "<level>{level: <7}</level> <dim>|</dim> " + stage + "{message}\n"

    message_color = "red" if record["level"].name in ("ERROR", "CRITICAL") else "white"

    return (
        "<level>{level: <7}</level> <dim>|</dim> "
        "<light-green>{name}:{function}:{line}</light-green> - "
        + stage
        + f"<{message_color}>{{message}}</{message_color}>\n{{exception}}"
    )


def setup_logging(log_dir_path: str, log_level_str: str) -> None:
    """
    Configures Loguru handlers for console and file logging.

    Removes pre-existing handlers, adds a coloured stderr sink at the requested
    level, a DEBUG file sink ``frac-rbm.log`` (10 MB rotation, 7 days retention)
    when a log directory is given, and routes stdlib ``logging`` and
    ``warnings`` through :class:`InterceptHandler`.

    Args:
        log_dir_path: Directory for the log file. Empty or None disables file logging.
        log_level_str: Console level, case-insensitive.
    """
    logger.remove()
    logger.configure(extra={"stage": "-"})

    console_log_level = log_level_str.upper()

    logger.add(
        sys.stderr,
        level=console_log_level,
        format=log_formatter,
        colorize=True,
        backtrace=True,
        diagnose=console_log_level in ("DEBUG", "TRACE"),
    )

    if log_dir_path:
        try:
            os.makedirs(log_dir_path, exist_ok=True)
            log_file_path = os.path.join(log_dir_path, LOG_FILE_NAME)
            logger.add(
                log_file_path,
                level="DEBUG",
                format="{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <7} | {process.id} | {thread.name: <15} | "
                "{extra[stage]} | {name}:{function}:{line} | {message}",
                rotation="10 MB",
                retention="7 days",
                enqueue=True,
                encoding="utf-8",
                backtrace=True,
                diagnose=True,
            )
            logger.debug(f"File logging enabled: {log_file_path}")
        except OSError as e:
            logger.error(f"Could not create log directory or file {log_dir_path}: {e}. File logging disabled.")
    else:
        logger.warning("No log directory specified. File logging disabled.")

    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)
    logging.captureWarnings(True)
    logger.debug(f"Logging initialized. Console level: {console_log_level}. Intercepting standard logging.")


@contextmanager
def stage(name: str) -> Iterator[dict]:
    """
    Log the start and wall time of a named pipeline stage.

    Yields a dict whose ``elapsed`` entry is filled in on exit, so callers can
    reuse the measured time.

    Args:
        name: Stage label, e.g. ``"offline D1"``.
    """
    timing = {"elapsed": 0.0}
    stage_logger = logger.bind(stage=name)
    stage_logger.debug("started")
    start = time.perf_counter()
    try:
        yield timing
    finally:
        timing["elapsed"] = time.perf_counter() - start
        stage_logger.info(f"done in {timing['elapsed']:.3f} s")
