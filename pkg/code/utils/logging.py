"""Logging configuration for mepscore.

This module configures dual-output logging:
- Console: succinct, colored output to stderr without tracebacks
- File: complete logs with timestamps and full tracebacks
- Verbose mode (--verbose or MEPSCORE_SHOW_ALL_ERRORS=1):
  - Console: full tracebacks on stderr
  - File: unchanged

Usage:
    from utils.logging import configure_logging, get_logger

    configure_logging(default_log_path(), verbose=config.verbose)

    logger = get_logger(__name__)
    logger.info("Run started")
    logger.info("hlm_fit_completed", tau1_sq=1618.4, converged=True)  # structlog-style

Configuration via environment variable:
    MEPSCORE_LOG=info                        # Set default level
    MEPSCORE_LOG=warn,models.hlm=debug       # Set module-specific levels
    MEPSCORE_SHOW_ALL_ERRORS=1               # Show full tracebacks on console
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional

import envlog

LOG_ENV_VAR = "MEPSCORE_LOG"
SHOW_ALL_ERRORS_ENV_VAR = "MEPSCORE_SHOW_ALL_ERRORS"


class NoTracebackConsoleFormatter(logging.Formatter):
    """Formatter that adds color and suppresses tracebacks on console."""

    COLORS = {
        "DEBUG": "\033[36m",  # Cyan
        "INFO": "\033[32m",  # Green
        "WARNING": "\033[33m",  # Yellow
        "ERROR": "\033[31m",  # Red
        "CRITICAL": "\033[1;31m",  # Bold Red
    }
    RESET = "\033[0m"

    def format(self, record):
        """Format log record with color, without traceback."""
        exc_info = record.exc_info
        exc_text = record.exc_text
        record.exc_info = None
        record.exc_text = None

        original_levelname = record.levelname
        if sys.stderr.isatty():
            color = self.COLORS.get(record.levelname, "")
            record.levelname = f"{color}{record.levelname}{self.RESET}"

        result = super().format(record)

        record.levelname = original_levelname
        record.exc_info = exc_info
        record.exc_text = exc_text

        return result


class FullTracebackConsoleFormatter(logging.Formatter):
    """Formatter that includes full tracebacks on console (verbose mode)."""


class StructlogCompatLogger(logging.LoggerAdapter):
    """
    Logger adapter that provides structlog-style keyword argument support.

    Allows both traditional and structlog-style logging:
        logger.info("message %s", value)          # Traditional
        logger.info("event", key=value, foo=bar)  # structlog-style
    """

    def process(self, msg: str, kwargs: dict[str, Any]) -> tuple[str, dict]:
        standard_keys = {"exc_info", "stack_info", "stacklevel", "extra"}
        custom_kwargs = {k: v for k, v in kwargs.items() if k not in standard_keys}
        standard_kwargs = {k: v for k, v in kwargs.items() if k in standard_keys}

        if custom_kwargs:
            pairs = [f"{k}={v!r}" for k, v in custom_kwargs.items()]
            return f"{msg} [{', '.join(pairs)}]", standard_kwargs

        return msg, kwargs


def default_log_path() -> Path:
    """Log file location: ~/.mepscore/mepscore.log."""
    return Path.home() / ".mepscore" / "mepscore.log"


def show_all_errors() -> bool:
    return os.environ.get(SHOW_ALL_ERRORS_ENV_VAR) == "1"


def _console_formatter(verbose: bool) -> logging.Formatter:
    if verbose or show_all_errors():
        return FullTracebackConsoleFormatter(fmt="%(levelname)s: %(message)s")
    return NoTracebackConsoleFormatter("%(levelname)s: %(message)s")


def configure_logging(log_file: Optional[Path] = None, verbose: bool = False) -> Optional[Path]:
    """
    Configure dual-output logging for mepscore.

    Args:
        log_file: Path to the log file; None disables the file handler
        verbose: Debug level and full tracebacks on the console

    Returns:
        Path to the log file, or None when file logging is disabled or the
        location is not writable

    Environment Variables:
        MEPSCORE_LOG: Set log levels (e.g., "info" or "warn,models.hlm=debug")
        MEPSCORE_SHOW_ALL_ERRORS: If "1", show full tracebacks on console
    """
    envlog.init(env_var=LOG_ENV_VAR)

    root_logger = logging.getLogger()
    if verbose:
        root_logger.setLevel(logging.DEBUG)

    console_handler = None
    for handler in root_logger.handlers:
        if isinstance(handler, logging.StreamHandler) and getattr(handler, "stream", None) is sys.stderr:
            console_handler = handler
            break

    if console_handler is None:
        console_handler = logging.StreamHandler(sys.stderr)
        root_logger.addHandler(console_handler)
    console_handler.setFormatter(_console_formatter(verbose))

    if log_file is None:
        return None
    log_file = Path(log_file).expanduser()

    # Re-configuration must not stack file handlers
    for handler in list(root_logger.handlers):
        if isinstance(handler, logging.FileHandler) and Path(handler.baseFilename) == Path(log_file).resolve():
            return log_file

    try:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, mode="a", encoding="utf-8")
    except OSError as e:
        root_logger.warning("Log file unavailable (%s); logging to console only", e)
        return None

    file_handler.setFormatter(
        logging.Formatter(
            fmt="%(asctime)s [%(levelname)8s] %(name)s:%(lineno)d - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )
    )
    root_logger.addHandler(file_handler)

    return log_file


def get_logger(name: str) -> StructlogCompatLogger:
    """
    Get a logger for the given name with structlog-style support.

    Args:
        name: Logger name (typically __name__)

    Returns:
        StructlogCompatLogger instance that supports both traditional
        and structlog-style logging

    Example:
        logger = get_logger(__name__)
        logger.debug("match_solved", kind="ml", caliper=0.5, sets=112)
    """
    return StructlogCompatLogger(logging.getLogger(name), {})
