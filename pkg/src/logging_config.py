"""Logging configuration for the ringmap toolkit."""
import logging
import logging.handlers
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

LOGGER_NAME = "ringmap"
LOG_ENV_VAR = "RINGMAP_LOG"


def level_from_env(default: str = "WARNING") -> str:
    """Read the verbosity from ``RINGMAP_LOG`` (a ``.env`` file is honoured)."""
    load_dotenv()
    level = os.getenv(LOG_ENV_VAR, default).strip().upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        return default
    return level


def setup_logging(
    log_level: Optional[str] = None,
    log_dir: Optional[str] = None,
    log_to_file: bool = False,
    log_to_console: bool = True
) -> logging.Logger:
    """
    Configure the package logger.

    Args:
        log_level: Logging level; falls back to ``RINGMAP_LOG``
        log_dir: Directory for log files (default: <repo>/logs)
        log_to_file: Whether to write rotating log files
        log_to_console: Whether to log to stderr

    Returns:
        Configured logger instance
    """
    if log_level is None:
        log_level = level_from_env()

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(getattr(logging, log_level.upper()))

    # Re-running setup must not stack handlers
    logger.handlers.clear()

    detailed_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    simple_formatter = logging.Formatter('%(levelname)s - %(message)s')

    if log_to_console:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(getattr(logging, log_level.upper()))
        console_handler.setFormatter(simple_formatter)
        logger.addHandler(console_handler)

    if log_to_file:
        if log_dir is None:
            log_dir = os.path.join(os.path.dirname(os.path.dirname(__file__)), "logs")
        Path(log_dir).mkdir(parents=True, exist_ok=True)

        file_handler = logging.handlers.RotatingFileHandler(
            os.path.join(log_dir, "ringmap.log"),
            maxBytes=10 * 1024 * 1024,  # 10 MB
            backupCount=5,
            encoding='utf-8'
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(detailed_formatter)
        logger.addHandler(file_handler)

        error_handler = logging.handlers.RotatingFileHandler(
            os.path.join(log_dir, "errors.log"),
            maxBytes=10 * 1024 * 1024,
            backupCount=5,
            encoding='utf-8'
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(detailed_formatter)
        logger.addHandler(error_handler)

    logger.propagate = False
    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Get a logger instance.

    Args:
        name: Child logger name (default: the package logger)

    Returns:
        Logger instance
    """
    if name is None:
        return logging.getLogger(LOGGER_NAME)
    return logging.getLogger(f"{LOGGER_NAME}.{name}")
