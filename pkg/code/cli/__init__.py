"""
mepscore command modes.

Each mode module exposes ``run(config) -> ExitCode``; ``run`` here
dispatches on ``config.mode``.
"""

from typing import Callable, Dict

from config import RunConfig
from mepscore_types import ExitCode
from utils.exceptions import UsageError
from utils.logging import get_logger

logger = get_logger(__name__)


def _handlers() -> Dict[str, Callable[[RunConfig], ExitCode]]:
    from . import approx_check, balance, estimate, fit_ps, match, simulate

    return {
        "simulate": simulate.run,
        "fit-ps": fit_ps.run,
        "match": match.run,
        "balance": balance.run,
        "estimate": estimate.run,
        "approx-check": approx_check.run,
    }


def run(config: RunConfig) -> ExitCode:
    """Run the configured mode and return its exit code."""
    handler = _handlers().get(config.mode)
    if handler is None:
        raise UsageError(f"unknown mode {config.mode!r}")
    logger.info("mode_started", mode=config.mode, output_dir=config.output_dir)
    code = handler(config)
    logger.info("mode_completed", mode=config.mode, exit_code=int(code))
    return code
