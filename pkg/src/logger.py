"""
Logging configuration for the vecspin project.
Uses a single JSON-lines file for all logs (append mode) plus a console handler.
"""
import logging
import sys
import json
from datetime import datetime
from pathlib import Path
from typing import Optional

APP_LOGGER = "vecspin"
LOG_FILE_NAME = "vecspin.log"


class JSONFormatter(logging.Formatter):
    """Formats log records as one JSON object per line."""

    def format(self, record):
        log_entry = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno
        }

        if record.exc_info:
            log_entry["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_entry, ensure_ascii=False)


class JSONFileHandler(logging.FileHandler):
    """File handler that appends JSON logs to a single file."""

    def emit(self, record):
        try:
            msg = self.format(record)
            stream = self.stream
            stream.write(msg + '\n')
            self.flush()
        except Exception:
            self.handleError(record)


def setup_logger(name: str, log_dir: Optional[Path], level: str = "INFO") -> logging.Logger:
    """
    Set up a logger with JSON file handler and console handler.

    Args:
        name: Name of the logger (normally APP_LOGGER)
        log_dir: Directory to store the log file; None disables file logging
        level: Console log level name

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)

    # Prevent adding handlers multiple times
    if logger.handlers:
        return logger

    console_formatter = logging.Formatter('%(levelname)s: %(message)s')

    if log_dir is not None:
        log_file = log_dir / LOG_FILE_NAME
        file_handler = JSONFileHandler(log_file, mode='a', encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(JSONFormatter())
        logger.addHandler(file_handler)

    # Console output goes to stderr so stdout stays clean for results
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(getattr(logging, level.upper(), logging.INFO))
    console_handler.setFormatter(console_formatter)
    logger.addHandler(console_handler)

    return logger


def get_logger(component: str) -> logging.Logger:
    """Child logger of the application logger, e.g. ``vecspin.functional``."""
    return logging.getLogger(f"{APP_LOGGER}.{component}")
