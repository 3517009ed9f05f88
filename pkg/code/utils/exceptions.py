"""
Exception hierarchy and formatting for mepscore.

Every failure a run can hit is mapped onto one of the CLI exit codes:
usage errors (bad flags, unknown config keys, missing files) exit 1, data
errors (schema violations, precondition breaches) exit 2, and numerical
failures (singular systems, infeasible flows, anything unexpected) exit 3.
"""

from typing import Tuple

from mepscore_types import ExitCode
from utils.logging import show_all_errors


class MepscoreError(Exception):
    """Base class for errors raised deliberately by mepscore."""

    exit_code: ExitCode = ExitCode.NUMERICAL_ERROR


class UsageError(MepscoreError):
    """Invalid configuration, flags or file references."""

    exit_code = ExitCode.USAGE_ERROR


class DataError(MepscoreError, ValueError):
    """Input data violates a schema rule or an operation's precondition."""

    exit_code = ExitCode.DATA_ERROR


class NumericalError(MepscoreError, ArithmeticError):
    """A numerical routine could not produce a usable answer."""

    exit_code = ExitCode.NUMERICAL_ERROR


class ExceptionCategory:
    """Exception categories for different handling strategies."""

    USER_ERROR = "user"  # usage and data errors, message is enough
    NUMERICAL_ERROR = "numerical"  # expected numerical failures
    SYSTEM_ERROR = "system"  # bugs and anything unexpected


_USER_ERROR_TYPES = {
    "FileNotFoundError",
    "PermissionError",
    "IsADirectoryError",
    "ConfigNotFoundError",
    "ProfileNotFoundError",
}


def categorize_exception(exc: BaseException) -> str:
    """
    Categorize an exception based on its type.

    Args:
        exc: The exception to categorize

    Returns:
        ExceptionCategory constant
    """
    if isinstance(exc, (UsageError, DataError)):
        return ExceptionCategory.USER_ERROR
    if isinstance(exc, NumericalError):
        return ExceptionCategory.NUMERICAL_ERROR
    if type(exc).__name__ in _USER_ERROR_TYPES:
        return ExceptionCategory.USER_ERROR
    return ExceptionCategory.SYSTEM_ERROR


def exit_code_for(exc: BaseException) -> ExitCode:
    """Map an exception onto the CLI exit code contract."""
    if isinstance(exc, MepscoreError):
        return exc.exit_code
    if isinstance(exc, KeyboardInterrupt):
        return ExitCode.USER_INTERRUPT
    if type(exc).__name__ in _USER_ERROR_TYPES:
        return ExitCode.USAGE_ERROR
    return ExitCode.NUMERICAL_ERROR


def format_exception(exc: BaseException) -> Tuple[str, bool]:
    """
    Format an exception as a one-line cause.

    Args:
        exc: The exception to format

    Returns:
        Tuple of (formatted_message, should_show_traceback)
    """
    force_all_tracebacks = show_all_errors()

    category = categorize_exception(exc)
    exc_type = type(exc).__name__
    first_line = str(exc).split("\n")[0]

    if category == ExceptionCategory.USER_ERROR:
        return f"{exc_type}: {first_line}", force_all_tracebacks
    if category == ExceptionCategory.NUMERICAL_ERROR:
        return f"Numerical failure ({exc_type}): {first_line}", force_all_tracebacks

    return f"System Error ({exc_type}): {first_line}", True


def log_exception(logger_instance, event: str, exc: BaseException, **kwargs) -> None:
    """
    Log an exception with category-aware formatting.

    Args:
        logger_instance: The logger to use
        event: Event name (e.g., "hlm_fit_failed")
        exc: The exception to log
        **kwargs: Additional context

    Example:
        try:
            fit = fit_hlm(dataset, sigma, "g5m")
        except NumericalError as e:
            log_exception(logger, "hlm_fit_failed", e, assessment="g5m")
    """
    formatted_msg, should_trace = format_exception(exc)

    kwargs["error"] = formatted_msg
    kwargs["error_type"] = type(exc).__name__

    if should_trace:
        kwargs["exc_info"] = True

    logger_instance.error(event, **kwargs)
